//! Analytic gradients against central finite differences.

mod common;

use avgrl_core::exact::{average_reward, grad_stationary, policy_gradient, PolicyEvaluation};
use avgrl_core::DVector;
use common::garnet_instance;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().map(|a| a.abs()).fold(0.0, f64::max).max(1e-8);
    diff / scale
}

fn perturbed(theta: &DVector<f64>, j: usize, h: f64) -> DVector<f64> {
    let mut t = theta.clone();
    t[j] += h;
    t
}

#[test]
fn policy_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let inst = garnet_instance(seed);
        let g = policy_gradient(&inst.mdp, &inst.policy).unwrap();
        let fd: Vec<f64> = (0..g.len())
            .map(|j| {
                let up = inst.policy.with_theta(perturbed(inst.policy.theta(), j, H));
                let dn = inst.policy.with_theta(perturbed(inst.policy.theta(), j, -H));
                (average_reward(&inst.mdp, &up).unwrap() - average_reward(&inst.mdp, &dn).unwrap()) / (2.0 * H)
            })
            .collect();
        let err = rel_err(g.as_slice(), &fd);
        assert!(err <= REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn stationary_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let inst = garnet_instance(seed);
        let g = grad_stationary(&inst.mdp, &inst.policy).unwrap();
        let n = inst.mdp.n_states();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for j in 0..g.nrows() {
            let mu = |h: f64| {
                let p = inst.policy.with_theta(perturbed(inst.policy.theta(), j, h));
                PolicyEvaluation::new(&inst.mdp, &p).unwrap().mu
            };
            let fd = (mu(H) - mu(-H)) / (2.0 * H);
            for s in 0..n {
                analytic.push(g[(j, s)]);
                numeric.push(fd[s]);
            }
        }
        let err = rel_err(&analytic, &numeric);
        assert!(err <= REL_TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn stationary_gradient_rows_sum_to_zero() {
    let inst = garnet_instance(3);
    let g = grad_stationary(&inst.mdp, &inst.policy).unwrap();
    for j in 0..g.nrows() {
        assert!(g.row(j).sum().abs() < 1e-12);
    }
}
