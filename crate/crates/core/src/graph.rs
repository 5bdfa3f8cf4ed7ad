//! Strongly connected components on the support graph of a square matrix.

use nalgebra::DMatrix;

/// Support threshold: entries at or below this are treated as absent edges.
pub(crate) const SUPPORT_EPS: f64 = 0.0;

/// Kosaraju SCC labelling. Returns `(component_of_state, n_components)`.
pub(crate) fn strongly_connected(kernel: &DMatrix<f64>) -> (Vec<usize>, usize) {
    let n = kernel.nrows();
    let edge = |i: usize, j: usize| kernel[(i, j)] > SUPPORT_EPS;

    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        // iterative post-order DFS
        let mut stack = vec![(root, 0usize)];
        seen[root] = true;
        while let Some((u, next)) = stack.last_mut() {
            let u = *u;
            if *next < n {
                let v = *next;
                *next += 1;
                if edge(u, v) && !seen[v] {
                    seen[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
                stack.pop();
            }
        }
    }

    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        let mut stack = vec![root];
        comp[root] = n_comp;
        while let Some(u) = stack.pop() {
            for (v, c) in comp.iter_mut().enumerate() {
                if *c == usize::MAX && edge(v, u) {
                    *c = n_comp;
                    stack.push(v);
                }
            }
        }
        n_comp += 1;
    }
    (comp, n_comp)
}

/// Closed communicating classes (recurrent classes of a finite chain).
pub(crate) fn closed_classes(kernel: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = kernel.nrows();
    let (comp, n_comp) = strongly_connected(kernel);
    let mut closed = vec![true; n_comp];
    for i in 0..n {
        for j in 0..n {
            if kernel[(i, j)] > SUPPORT_EPS && comp[i] != comp[j] {
                closed[comp[i]] = false;
            }
        }
    }
    let mut classes = vec![Vec::new(); n_comp];
    for (s, &c) in comp.iter().enumerate() {
        classes[c].push(s);
    }
    classes
        .into_iter()
        .zip(closed)
        .filter_map(|(members, is_closed)| is_closed.then_some(members))
        .collect()
}

/// Period of the (first) closed class: gcd over support edges inside the class
/// of `level(u) + 1 - level(v)`, with levels from a BFS.
pub(crate) fn period_of_closed_class(kernel: &DMatrix<f64>) -> Option<usize> {
    let class = closed_classes(kernel).into_iter().next()?;
    let n = kernel.nrows();
    let mut inside = vec![false; n];
    for &s in &class {
        inside[s] = true;
    }
    let mut level = vec![usize::MAX; n];
    level[class[0]] = 0;
    let mut queue = std::collections::VecDeque::from([class[0]]);
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !inside[v] || kernel[(u, v)] <= SUPPORT_EPS {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let diff = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, diff);
            }
        }
    }
    Some(g.max(1))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
