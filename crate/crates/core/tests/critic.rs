//! The TD system against a hand solve, simulation and the TD recursion itself.

mod common;

use std::sync::Arc;

use avgrl_core::exact::PolicyEvaluation;
use avgrl_core::features::{make_features, matrix_a, FeatureKind};
use avgrl_core::learner::{evaluate_critic, sample_transition, Algorithm, LearnerState, Problem, StepContext, StepSchedule};
use avgrl_core::oracles::critic_fixed_point;
use avgrl_core::{ActionFeatures, DMatrix, FiniteMdp, SoftmaxLinearPolicy};
use common::garnet_instance;

fn three_state_ring() -> FiniteMdp {
    let p = vec![
        vec![vec![0.5, 0.5, 0.0]],
        vec![vec![0.0, 0.5, 0.5]],
        vec![vec![0.5, 0.0, 0.5]],
    ];
    FiniteMdp::new(p, vec![vec![1.0], vec![0.0], vec![0.0]], 1.0).unwrap()
}

#[test]
fn reduced_one_hot_matches_hand_elimination() {
    // μ uniform, L = 1/3; A = ⅓[[−½, ½], [0, −½]], b = ⅓(⅔, −⅓) ⇒ v* = (⅔, −⅔)
    let mdp = three_state_ring();
    let critic = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
    let policy = SoftmaxLinearPolicy::zero(Arc::new(ActionFeatures::tabular(3, 1)));
    let (a, b) = matrix_a(&mdp, &policy, &critic).unwrap();
    let third = 1.0 / 3.0;
    let a_hand = DMatrix::from_row_slice(2, 2, &[-0.5 * third, 0.5 * third, 0.0, -0.5 * third]);
    assert!((a - a_hand).amax() < 1e-14);
    assert!((b[0] - 2.0 / 9.0).abs() < 1e-14 && (b[1] + 1.0 / 9.0).abs() < 1e-14);
    let v = critic_fixed_point(&mdp, &policy, &critic).unwrap();
    assert!((v[0] - 2.0 / 3.0).abs() < 1e-12 && (v[1] + 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn simulated_a_matches_the_closed_form() {
    let inst = garnet_instance(11);
    let (a, _) = matrix_a(&inst.mdp, &inst.policy, &inst.critic).unwrap();
    let problem = Problem::new(inst.mdp.clone(), inst.critic.clone(), inst.policy.features().clone()).unwrap();
    let ctx = StepContext {
        mdp: &problem.mdp,
        critic: &problem.critic,
        actor: &problem.actor,
        critic_radius: 1.0,
        actor_radius: None,
        reward_noise: 0.0,
    };
    let mut state = LearnerState::initial(5, inst.critic.dim(), problem.actor.dim(), 5);
    state.theta = inst.policy.theta().clone();
    let d = inst.critic.dim();
    let (batches, per_batch) = (40, 20_000);
    for _ in 0..1000 {
        let tr = sample_transition(&mut state, &ctx);
        state.s = tr.s_next;
    }
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut acc = DMatrix::zeros(d, d);
        for _ in 0..per_batch {
            let tr = sample_transition(&mut state, &ctx);
            let (p, q) = (inst.critic.phi(tr.s), inst.critic.phi(tr.s_next));
            for i in 0..d {
                for j in 0..d {
                    acc[(i, j)] += p[i] * (q[j] - p[j]);
                }
            }
            state.s = tr.s_next;
        }
        means.push(acc / per_batch as f64);
    }
    let k = batches as f64;
    let mean = means.iter().fold(DMatrix::zeros(d, d), |s, m| s + m) / k;
    for i in 0..d {
        for j in 0..d {
            let var = means.iter().map(|m| (m[(i, j)] - mean[(i, j)]).powi(2)).sum::<f64>() / (k - 1.0);
            let se = (var / k).sqrt();
            assert!((mean[(i, j)] - a[(i, j)]).abs() <= 3.0 * se + 1e-4, "A[{i},{j}]");
        }
    }
}

#[test]
fn frozen_policy_td_average_reaches_fixed_point() {
    let inst = garnet_instance(2);
    let v_star = critic_fixed_point(&inst.mdp, &inst.policy, &inst.critic).unwrap();
    let problem = Problem::new(inst.mdp.clone(), inst.critic.clone(), inst.policy.features().clone()).unwrap();
    let est = evaluate_critic(
        &problem,
        inst.policy.theta(),
        &StepSchedule::critic_actor(),
        Algorithm::CriticActor,
        200_000,
        100_000,
        0,
        10.0 * v_star.norm().max(1.0),
    );
    let rel = (&est.tail_mean - &v_star).norm() / v_star.norm();
    assert!(rel <= 0.05, "relative error {rel}");
    let gain = PolicyEvaluation::new(&inst.mdp, &inst.policy).unwrap().gain;
    assert!((est.avg_reward - gain).abs() < 0.05);
}
