//! Finite MDPs and the Markov chain a stationary policy induces on them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph;

/// Row-sum tolerance for transition probabilities.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// A finite MDP with deterministic rewards `R(s, a)` bounded by `U_r`.
///
/// The transition tensor is stored flat, indexed `[s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    reward_bound: f64,
}

impl FiniteMdp {
    /// Builds an MDP from nested tables, checking every invariant.
    pub fn new(transition: Vec<Vec<Vec<f64>>>, reward: Vec<Vec<f64>>, reward_bound: f64) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "P[{s}] has {} actions, expected {n_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::DimensionMismatch(format!(
                        "P[{s}][{a}] has {} entries, expected {n_states}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        if reward.len() != n_states {
            return Err(Error::DimensionMismatch(format!(
                "R has {} rows, expected {n_states}",
                reward.len()
            )));
        }
        let mut reward_flat = Vec::with_capacity(n_states * n_actions);
        for (s, row) in reward.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "R[{s}] has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            reward_flat.extend_from_slice(row);
        }
        Self::from_flat(n_states, n_actions, flat, reward_flat, reward_bound)
    }

    pub fn from_flat(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        reward_bound: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidSpec("MDP needs at least one state and one action".into()));
        }
        if transition.len() != n_states * n_actions * n_states || reward.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch("flat tables do not match (n_states, n_actions)".into()));
        }
        let mdp = Self { n_states, n_actions, transition, reward, reward_bound };
        mdp.check()?;
        Ok(mdp)
    }

    fn check(&self) -> Result<()> {
        if !self.reward_bound.is_finite() || self.reward_bound <= 0.0 {
            return Err(Error::InvariantViolation(format!(
                "reward_bound must be positive and finite, got {}",
                self.reward_bound
            )));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                if let Some(j) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvariantViolation(format!(
                        "P(.|s={s},a={a}) has invalid entry {} at s'={j}",
                        row[j]
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "P(.|s={s},a={a}) sums to {sum}, expected 1"
                    )));
                }
                let r = self.reward(s, a);
                if !r.is_finite() || r.abs() > self.reward_bound {
                    return Err(Error::InvariantViolation(format!(
                        "|R(s={s},a={a})| = {} exceeds reward_bound {}",
                        r.abs(),
                        self.reward_bound
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.transition_row(s, a).to_vec()).collect())
            .collect()
    }

    pub fn reward_nested(&self) -> Vec<Vec<f64>> {
        self.reward.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
    }

    /// Returns a copy with `c` added to every reward (the bound grows by `|c|`).
    pub fn shift_rewards(&self, c: f64) -> Self {
        Self {
            reward: self.reward.iter().map(|r| r + c).collect(),
            reward_bound: self.reward_bound + c.abs(),
            ..self.clone()
        }
    }

    /// The chain induced by action probabilities `probs` (`n_states x n_actions`).
    pub fn policy_chain(&self, probs: &DMatrix<f64>) -> PolicyChain {
        let n = self.n_states;
        let mut kernel = DMatrix::zeros(n, n);
        let mut expected_reward = DVector::zeros(n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = probs[(s, a)];
                expected_reward[s] += pa * self.reward(s, a);
                for (next, p) in self.transition_row(s, a).iter().enumerate() {
                    kernel[(s, next)] += pa * p;
                }
            }
        }
        PolicyChain { kernel, expected_reward }
    }

    /// Support of `Σ_a P(.|s,a)`: the reachability graph under any fully mixed policy.
    pub fn support_kernel(&self) -> DMatrix<f64> {
        let uniform = DMatrix::from_element(self.n_states, self.n_actions, 1.0 / self.n_actions as f64);
        self.policy_chain(&uniform).kernel
    }
}

/// State-to-state kernel `P_θ` and expected reward `R_θ` of a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyChain {
    pub kernel: DMatrix<f64>,
    pub expected_reward: DVector<f64>,
}

impl PolicyChain {
    pub fn new(kernel: DMatrix<f64>, expected_reward: DVector<f64>) -> Result<Self> {
        let n = kernel.nrows();
        if kernel.ncols() != n || expected_reward.len() != n {
            return Err(Error::DimensionMismatch("kernel must be square and match reward length".into()));
        }
        for (s, row) in kernel.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|p| *p < 0.0) {
                return Err(Error::InvariantViolation(format!("kernel row {s} is not a distribution")));
            }
        }
        Ok(Self { kernel, expected_reward })
    }

    /// Kernel-only chain with zero rewards, for mixing and stationarity questions.
    pub fn from_kernel(kernel: DMatrix<f64>) -> Result<Self> {
        let n = kernel.nrows();
        Self::new(kernel, DVector::zeros(n))
    }

    pub fn n_states(&self) -> usize {
        self.kernel.nrows()
    }

    /// Number of closed communicating classes on the kernel's support.
    pub fn closed_class_count(&self) -> usize {
        graph::closed_classes(&self.kernel).len()
    }

    /// Errors with `NotIrreducible` unless there is exactly one closed class.
    pub fn require_single_class(&self) -> Result<()> {
        match self.closed_class_count() {
            1 => Ok(()),
            closed_classes => Err(Error::NotIrreducible { closed_classes }),
        }
    }

    /// Strong connectivity of the whole state graph.
    pub fn is_irreducible(&self) -> bool {
        graph::strongly_connected(&self.kernel).1 == 1
    }
}
