use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schedule::{Algorithm, Rates, StepSchedule};
use crate::features::FeatureMap;
use crate::mdp::FiniteMdp;
use crate::policy::ActionFeatures;

/// One observed transition `(s_t, a_t, r_t, s_{t+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// Everything the recursion carries from one step to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub t: u64,
    /// Average-reward estimate `L_t`.
    pub avg_reward: f64,
    /// Critic parameters `v_t`.
    pub v: DVector<f64>,
    /// Actor parameters `θ_t`.
    pub theta: DVector<f64>,
    /// Current environment state `s_t`.
    pub s: usize,
    pub rng: ChaCha8Rng,
}

impl LearnerState {
    /// `L_0 = 0`, `v_0 = 0`, `θ_0 = 0` and `s_0` uniform, all from `seed`.
    pub fn initial(n_states: usize, critic_dim: usize, actor_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = rng.random_range(0..n_states);
        Self {
            t: 0,
            avg_reward: 0.0,
            v: DVector::zeros(critic_dim),
            theta: DVector::zeros(actor_dim),
            s,
            rng,
        }
    }
}

/// Fixed data a step reads.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub mdp: &'a FiniteMdp,
    pub critic: &'a FeatureMap,
    pub actor: &'a ActionFeatures,
    /// Radius `U_v` of the critic projection.
    pub critic_radius: f64,
    /// Optional ball projection of the actor.
    pub actor_radius: Option<f64>,
    /// Reward noise amplitude in `[0, 1]`: `r = R + w (U_r − |R|) u`, `u ~ U(−1, 1)`.
    pub reward_noise: f64,
}

/// What a step observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub transition: Transition,
    pub delta: f64,
}

/// Euclidean projection onto `{‖v‖ ≤ radius}`.
pub fn project(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    let mut out = v.clone();
    project_in_place(&mut out, radius);
    out
}

pub fn project_in_place(v: &mut DVector<f64>, radius: f64) {
    debug_assert!(radius > 0.0);
    let norm = v.norm();
    if norm > radius {
        *v *= radius / norm;
    }
}

/// `δ = r − L + φ(s')ᵀv − φ(s)ᵀv`.
pub fn td_error(tr: &Transition, avg_reward: f64, v: &DVector<f64>, features: &FeatureMap) -> f64 {
    let v = v.as_slice();
    tr.r - avg_reward + features.value(tr.s_next, v) - features.value(tr.s, v)
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Draws `a_t ~ π_{θ_t}(·|s_t)`, `s_{t+1} ~ P(·|s_t,a_t)` and the reward, in that order.
pub fn sample_transition(state: &mut LearnerState, ctx: &StepContext<'_>) -> Transition {
    let mut probs = vec![0.0; ctx.actor.n_actions()];
    ctx.actor.probs_into(state.theta.as_slice(), state.s, &mut probs);
    let a = sample_index(&mut state.rng, &probs);
    let s_next = sample_index(&mut state.rng, ctx.mdp.transition_row(state.s, a));
    let mean = ctx.mdp.reward(state.s, a);
    let r = if ctx.reward_noise > 0.0 {
        let u: f64 = state.rng.random_range(-1.0..1.0);
        mean + ctx.reward_noise * (ctx.mdp.reward_bound() - mean.abs()) * u
    } else {
        mean
    };
    Transition { s: state.s, a, r, s_next }
}

/// Applies one iteration for an observed transition, in the order
/// `L ← L + γ(r − L)`, `δ` from the pre-update `(L, v)`, `v ← Γ(v + βδφ(s))`,
/// `θ ← θ + αδ∇log π_θ(a|s)`. Advances `t` and moves to `s_next`.
pub fn apply_update(state: &mut LearnerState, tr: &Transition, rates: Rates, ctx: &StepContext<'_>) -> f64 {
    let delta = td_error(tr, state.avg_reward, &state.v, ctx.critic);
    state.avg_reward += rates.gamma * (tr.r - state.avg_reward);

    for (v, p) in state.v.iter_mut().zip(ctx.critic.phi(tr.s)) {
        *v += rates.beta * delta * p;
    }
    project_in_place(&mut state.v, ctx.critic_radius);

    let mut probs = vec![0.0; ctx.actor.n_actions()];
    ctx.actor.probs_into(state.theta.as_slice(), tr.s, &mut probs);
    let mut psi = vec![0.0; ctx.actor.dim()];
    ctx.actor.score_into(&probs, tr.s, tr.a, &mut psi);
    let scale = rates.alpha * delta;
    for (th, p) in state.theta.iter_mut().zip(&psi) {
        *th += scale * p;
    }
    if let Some(radius) = ctx.actor_radius {
        project_in_place(&mut state.theta, radius);
    }

    state.t += 1;
    state.s = tr.s_next;
    delta
}

/// One iteration of `algo` with rates from `sched` at the current `t`.
pub fn step(state: &mut LearnerState, ctx: &StepContext<'_>, sched: &StepSchedule, algo: Algorithm) -> StepInfo {
    let rates = sched.rates(algo, state.t);
    let transition = sample_transition(state, ctx);
    let delta = apply_update(state, &transition, rates, ctx);
    StepInfo { transition, delta }
}

/// Critic-actor: actor and average reward on `ν`, critic on `σ`.
pub fn ca_step(state: &mut LearnerState, ctx: &StepContext<'_>, sched: &StepSchedule) -> StepInfo {
    step(state, ctx, sched, Algorithm::CriticActor)
}

/// Actor-critic: the average reward follows the critic exponent `σ`.
pub fn ac_step(state: &mut LearnerState, ctx: &StepContext<'_>, sched: &StepSchedule) -> StepInfo {
    step(state, ctx, sched, Algorithm::ActorCritic)
}

/// Single timescale: `α_t = β_t = γ_t = c_α/(1+t)^ν`.
pub fn stac_step(state: &mut LearnerState, ctx: &StepContext<'_>, sched: &StepSchedule) -> StepInfo {
    step(state, ctx, sched, Algorithm::SingleTimescale)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    use super::*;

    fn two_state() -> (FiniteMdp, FeatureMap, ActionFeatures) {
        let mdp = FiniteMdp::new(
            vec![vec![vec![0.7, 0.3], vec![0.2, 0.8]], vec![vec![0.4, 0.6], vec![0.9, 0.1]]],
            vec![vec![1.0, 0.0], vec![0.5, -0.5]],
            1.0,
        )
        .unwrap();
        let critic = FeatureMap::new(DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        (mdp, critic, ActionFeatures::tabular(2, 2))
    }

    fn ctx<'a>(mdp: &'a FiniteMdp, critic: &'a FeatureMap, actor: &'a ActionFeatures) -> StepContext<'a> {
        StepContext { mdp, critic, actor, critic_radius: 5.0, actor_radius: None, reward_noise: 0.0 }
    }

    #[test]
    fn projection_examples() {
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let p = project(&v, 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project(&p, 1.0), p);
        let inside = DVector::from_vec(vec![0.1, -0.2]);
        assert_eq!(project(&inside, 1.0), inside);
    }

    #[test]
    fn td_error_examples() {
        // φ(s') = (1, 0), φ(s) = (0, 1), v = (0.3, 0.2)
        let f = FeatureMap::unchecked(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let v = DVector::from_vec(vec![0.3, 0.2]);
        let tr = Transition { s: 0, a: 0, r: 1.0, s_next: 1 };
        assert!((td_error(&tr, 0.5, &v, &f) - 0.6).abs() < 1e-15);
        let self_loop = Transition { s_next: 0, ..tr };
        assert!((td_error(&self_loop, 0.5, &v, &f) - 0.5).abs() < 1e-15);
        assert_eq!(td_error(&tr, 0.5, &DVector::zeros(2), &f), 0.5);
    }

    #[test]
    fn hand_replayed_iteration() {
        let (mdp, critic, actor) = two_state();
        let c = ctx(&mdp, &critic, &actor);
        let mut state = LearnerState::initial(2, 1, 4, 0);
        state.s = 0;
        state.avg_reward = 0.2;
        state.v = DVector::from_vec(vec![0.5]);
        state.theta = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]);
        let tr = Transition { s: 0, a: 1, r: 0.0, s_next: 1 };
        let rates = Rates { alpha: 0.1, beta: 0.2, gamma: 0.3 };
        let delta = apply_update(&mut state, &tr, rates, &c);
        // δ = 0 − 0.2 + φ(1)v − φ(0)v = −0.2 + 0 − 0.5 = −0.7 (uses pre-update L)
        assert!((delta + 0.7).abs() < 1e-15);
        // L = 0.2 + 0.3 (0 − 0.2) = 0.14
        assert!((state.avg_reward - 0.14).abs() < 1e-15);
        // v = 0.5 + 0.2 (−0.7)(1) = 0.36
        assert!((state.v[0] - 0.36).abs() < 1e-15);
        // ψ(0, a=1) = x(0,1) − ½x(0,0) − ½x(0,1) = (−½, ½, 0, 0); θ = 0.1 (−0.7) ψ
        let expect = [0.035, -0.035, 0.0, 0.0];
        for (got, want) in state.theta.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert_eq!((state.t, state.s), (1, 1));
    }

    #[test]
    fn null_step_only_moves_time_and_state() {
        let (mdp, critic, actor) = two_state();
        let c = ctx(&mdp, &critic, &actor);
        let mut state = LearnerState::initial(2, 1, 4, 9);
        state.avg_reward = 0.3;
        state.v = DVector::from_vec(vec![-1.0]);
        state.theta = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let before = state.clone();
        for _ in 0..50 {
            ca_step(&mut state, &c, &StepSchedule::zero());
        }
        assert_eq!(state.t, 50);
        assert_eq!(state.avg_reward, before.avg_reward);
        assert_eq!(state.v, before.v);
        assert_eq!(state.theta, before.theta);
    }

    #[test]
    fn ac_with_equal_exponents_matches_single_timescale() {
        let (mdp, critic, actor) = two_state();
        let c = ctx(&mdp, &critic, &actor);
        let sched = StepSchedule::new(1.5, 1.5, 1.5, 0.6, 0.6);
        let mut a = LearnerState::initial(2, 1, 4, 3);
        let mut b = a.clone();
        for _ in 0..500 {
            ac_step(&mut a, &c, &sched);
            stac_step(&mut b, &c, &sched);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let (mdp, critic, actor) = two_state();
        let c = StepContext { reward_noise: 0.5, ..ctx(&mdp, &critic, &actor) };
        let sched = StepSchedule::critic_actor();
        let mut a = LearnerState::initial(2, 1, 4, 42);
        let mut b = LearnerState::initial(2, 1, 4, 42);
        for _ in 0..1000 {
            let ia = ca_step(&mut a, &c, &sched);
            let ib = ca_step(&mut b, &c, &sched);
            assert_eq!(ia, ib);
            assert!(ia.transition.r.abs() <= mdp.reward_bound());
        }
        assert_eq!(a, b);
    }

    #[test]
    fn critic_stays_in_ball_and_gain_stays_bounded() {
        let (mdp, critic, actor) = two_state();
        let c = StepContext { critic_radius: 0.05, ..ctx(&mdp, &critic, &actor) };
        let sched = StepSchedule::critic_actor();
        let mut s = LearnerState::initial(2, 1, 4, 1);
        for _ in 0..20_000 {
            ca_step(&mut s, &c, &sched);
            assert!(s.v.norm() <= 0.05 + 1e-15);
            // γ_t ≤ c_γ, so one overshoot past the reward range is the worst case
            assert!(s.avg_reward.abs() <= sched.c_gamma * mdp.reward_bound());
        }
    }

    #[test]
    fn actor_projection_is_optional() {
        let (mdp, critic, actor) = two_state();
        let c = StepContext { actor_radius: Some(0.5), ..ctx(&mdp, &critic, &actor) };
        let mut s = LearnerState::initial(2, 1, 4, 1);
        for _ in 0..5000 {
            ca_step(&mut s, &c, &StepSchedule::critic_actor());
            assert!(s.theta.norm() <= 0.5 + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(
            x in prop::collection::vec(-10.0f64..10.0, 3),
            y in prop::collection::vec(-10.0f64..10.0, 3),
            radius in 0.1f64..5.0,
        ) {
            let x = DVector::from_vec(x);
            let y = DVector::from_vec(y);
            let px = project(&x, radius);
            prop_assert!(px.norm() <= radius + 1e-12);
            prop_assert!((project(&px, radius) - &px).norm() <= 1e-12);
            prop_assert!((px - project(&y, radius)).norm() <= (x - y).norm() + 1e-12);
        }
    }
}
