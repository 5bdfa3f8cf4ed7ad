//! Ground truth for the learner: critic fixed point, projected Bellman
//! residual, the expected actor field and its bias, the expected critic drift,
//! geometric mixing estimates and the optimal gain.
//!
//! All expectations are exact sums over `(s, a, s')`; none of them sample.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, PolicyEvaluation};
use crate::features::{check_feature_states, td_system, FeatureMap};
use crate::graph;
use crate::learner::{Algorithm, StepSchedule};
use crate::mdp::{FiniteMdp, PolicyChain};
use crate::policy::SoftmaxLinearPolicy;

/// Smallest-to-largest singular value ratio below which `A` counts as singular.
const SINGULAR_RATIO: f64 = 1e-12;
/// Distances at or below this are outside the geometric regime of the fit.
const MIXING_FLOOR: f64 = 1e-12;
/// Relative deviation of `d_1` from the fitted line that drops it from the fit.
const HEAD_DEVIATION: f64 = 0.2;
/// Largest number of deterministic policies `brute_force_optimum` enumerates.
pub const ENUMERATION_BUDGET: usize = 1_000_000;

/// `v*(θ) = −A^{-1} b` from an existing evaluation.
pub fn critic_fixed_point_from(eval: &PolicyEvaluation, features: &FeatureMap) -> Result<DVector<f64>> {
    let (a, b) = td_system(eval, features);
    solve_fixed_point(&a, &b)
}

fn solve_fixed_point(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let sv = a.clone().singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    if smax.is_nan() || smax <= 0.0 || smin < SINGULAR_RATIO * smax {
        return Err(Error::SingularA);
    }
    a.clone().lu().solve(&(-b)).ok_or(Error::SingularA)
}

/// Root of `A v + b = 0`.
pub fn critic_fixed_point(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy, features: &FeatureMap) -> Result<DVector<f64>> {
    check_feature_states(mdp, features)?;
    critic_fixed_point_from(&PolicyEvaluation::new(mdp, policy)?, features)
}

/// `Φᵀ D_θ (T_θ(Φv) − Φv)` with `T_θ J = R_θ − L e + P_θ J`.
pub fn projected_bellman_residual(
    mdp: &FiniteMdp,
    policy: &SoftmaxLinearPolicy,
    v: &DVector<f64>,
    features: &FeatureMap,
) -> Result<DVector<f64>> {
    check_feature_states(mdp, features)?;
    let eval = PolicyEvaluation::new(mdp, policy)?;
    Ok(projected_bellman_residual_from(&eval, v, features))
}

pub fn projected_bellman_residual_from(eval: &PolicyEvaluation, v: &DVector<f64>, features: &FeatureMap) -> DVector<f64> {
    let phi = features.matrix();
    let n = phi.nrows();
    let j = &phi * v;
    let bellman = &eval.chain.expected_reward - DVector::from_element(n, eval.gain) + &eval.chain.kernel * &j;
    let diff = bellman - j;
    let weighted = DVector::from_fn(n, |s, _| eval.mu[s] * diff[s]);
    phi.transpose() * weighted
}

/// `E[δ φ(s)]` summed over `(s, a, s')`: one element of the critic's drift map.
pub fn expected_critic_drift(
    mdp: &FiniteMdp,
    policy: &SoftmaxLinearPolicy,
    v: &DVector<f64>,
    features: &FeatureMap,
) -> Result<DVector<f64>> {
    check_feature_states(mdp, features)?;
    let eval = PolicyEvaluation::new(mdp, policy)?;
    Ok(expected_critic_drift_from(&eval, mdp, v, features))
}

pub fn expected_critic_drift_from(
    eval: &PolicyEvaluation,
    mdp: &FiniteMdp,
    v: &DVector<f64>,
    features: &FeatureMap,
) -> DVector<f64> {
    let vs = v.as_slice();
    let mut out = DVector::zeros(features.dim());
    for s in 0..mdp.n_states() {
        let here = features.value(s, vs);
        let mut weight = 0.0;
        for a in 0..mdp.n_actions() {
            let p_sa = eval.mu[s] * eval.probs[(s, a)];
            for (next, p) in mdp.transition_row(s, a).iter().enumerate() {
                let delta = mdp.reward(s, a) - eval.gain + features.value(next, vs) - here;
                weight += p_sa * p * delta;
            }
        }
        for (o, f) in out.iter_mut().zip(features.phi(s)) {
            *o += weight * f;
        }
    }
    out
}

/// `M(θ, v) = E[δ^θ ∇log π_θ(a|s)]` under the stationary law of `θ`.
pub fn actor_field(
    mdp: &FiniteMdp,
    policy: &SoftmaxLinearPolicy,
    v: &DVector<f64>,
    features: &FeatureMap,
) -> Result<DVector<f64>> {
    check_feature_states(mdp, features)?;
    let eval = PolicyEvaluation::new(mdp, policy)?;
    Ok(actor_field_from(&eval, mdp, policy, v, features))
}

pub fn actor_field_from(
    eval: &PolicyEvaluation,
    mdp: &FiniteMdp,
    policy: &SoftmaxLinearPolicy,
    v: &DVector<f64>,
    features: &FeatureMap,
) -> DVector<f64> {
    let vs = v.as_slice();
    let mut weights = DMatrix::zeros(mdp.n_states(), mdp.n_actions());
    for s in 0..mdp.n_states() {
        let here = features.value(s, vs);
        for a in 0..mdp.n_actions() {
            weights[(s, a)] = mdp
                .transition_row(s, a)
                .iter()
                .enumerate()
                .map(|(next, p)| p * (mdp.reward(s, a) - eval.gain + features.value(next, vs) - here))
                .sum();
        }
    }
    eval.score_weighted(policy, &weights)
}

/// Bias of the actor direction for a fixed critic:
/// `Σ_s μ(s) ∇V̄(s)` with `V̄(s) = Σ_a π(a|s)[R(s,a) − L + Σ_{s'} P(s'|s,a) vᵀφ(s')]`,
/// expanded as `−∇L + Σ_s μ(s) Σ_a ∇π(a|s)[R − L + Σ P vᵀφ]`.
pub fn actor_bias(
    mdp: &FiniteMdp,
    policy: &SoftmaxLinearPolicy,
    v: &DVector<f64>,
    features: &FeatureMap,
) -> Result<DVector<f64>> {
    check_feature_states(mdp, features)?;
    let eval = PolicyEvaluation::new(mdp, policy)?;
    let grad = eval.score_weighted(policy, &eval.advantage());
    let vs = v.as_slice();
    let feats = policy.features();
    let mut expansion = DVector::zeros(policy.dim());
    for s in 0..mdp.n_states() {
        // ∇π(a|s) = π(a|s) (x(s,a) − Σ_b π(b|s) x(s,b))
        let probs: Vec<f64> = eval.probs.row(s).iter().copied().collect();
        let mut mean_x = vec![0.0; policy.dim()];
        for (b, pb) in probs.iter().enumerate() {
            for (m, x) in mean_x.iter_mut().zip(feats.x(s, b)) {
                *m += pb * x;
            }
        }
        for (a, pa) in probs.iter().enumerate() {
            let lookahead: f64 =
                mdp.transition_row(s, a).iter().enumerate().map(|(next, p)| p * features.value(next, vs)).sum();
            let bracket = mdp.reward(s, a) - eval.gain + lookahead;
            let w = eval.mu[s] * pa * bracket;
            for ((e, x), m) in expansion.iter_mut().zip(feats.x(s, a)).zip(&mean_x) {
                *e += w * (x - m);
            }
        }
    }
    Ok(expansion - grad)
}

/// Geometric envelope `d_TV(P^m(s,·), μ) ≤ b k^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub b: f64,
    pub k: f64,
    /// `d_m = max_s d_TV(P^m(s,·), μ)` for `m = 1, 2, …`, stopping at the horizon or
    /// at the first `d_m ≤ 1e-12`.
    pub distances: Vec<f64>,
    /// First `m` used in the fit.
    pub fit_start: usize,
}

impl MixingProfile {
    /// `min{m ≥ 0 : b k^{m−1} ≤ min_step}`.
    pub fn tau(&self, min_step: f64) -> usize {
        if self.k == 0.0 || self.b == 0.0 {
            return 1;
        }
        if min_step.is_nan() || min_step <= 0.0 {
            return usize::MAX;
        }
        let exact = 1.0 + (self.b / min_step).ln() / (1.0 / self.k).ln();
        let mut m = exact.ceil().max(0.0) as usize;
        // float guard around the closed form
        while m > 0 && self.envelope_at(m as f64 - 2.0) <= min_step {
            m -= 1;
        }
        while self.envelope_at(m as f64 - 1.0) > min_step {
            m += 1;
        }
        m
    }

    fn envelope_at(&self, exponent: f64) -> f64 {
        self.b * self.k.powf(exponent)
    }

    /// `τ_t` for the rates `algo` uses under `sched`.
    pub fn tau_of(&self, sched: &StepSchedule, algo: Algorithm, t: u64) -> usize {
        self.tau(sched.rates(algo, t).min())
    }

    pub fn envelope(&self, m: usize) -> f64 {
        self.b * self.k.powi(m as i32)
    }
}

/// Exact `d_m` by matrix powers, then a log-linear fit of the geometric tail.
pub fn estimate_mixing(chain: &PolicyChain, horizon: usize) -> Result<MixingProfile> {
    let mu = exact::stationary_distribution(chain)?;
    let n = chain.n_states();
    let horizon = horizon.max(2);
    let mut power = chain.kernel.clone();
    let mut distances = Vec::with_capacity(horizon);
    for m in 1..=horizon {
        if m > 1 {
            power = &power * &chain.kernel;
        }
        let d = (0..n)
            .map(|s| 0.5 * (0..n).map(|j| (power[(s, j)] - mu[j]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        distances.push(d);
        // below the floor only round-off is being measured
        if d <= MIXING_FLOOR {
            break;
        }
    }
    let d1 = distances[0];
    if d1 <= MIXING_FLOOR {
        return Ok(MixingProfile { b: 0.0, k: 0.0, distances, fit_start: 1 });
    }
    let best = distances.iter().copied().fold(f64::INFINITY, f64::min);
    if best > 0.5 * d1 {
        return Err(Error::PeriodicChain { horizon, d_tv: best });
    }

    let regime: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > MIXING_FLOOR)
        .map(|(i, d)| ((i + 1) as f64, d.ln()))
        .collect();
    let (mut log_b, mut log_k, mut fit_start) = if regime.len() >= 2 {
        let (lb, lk) = least_squares_line(&regime);
        (lb, lk, 1)
    } else {
        // one point above the floor: the next distance bounds the rate
        let next = distances.get(1).copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let lk = (next / d1).ln();
        (d1.ln() - lk, lk, 1)
    };
    if regime.len() >= 3 {
        let head = (log_b + log_k).exp();
        if (d1 / head - 1.0).abs() > HEAD_DEVIATION {
            let (lb, lk) = least_squares_line(&regime[1..]);
            log_b = lb;
            log_k = lk;
            fit_start = 2;
        }
    }
    let k = log_k.exp().min(1.0 - 1e-15);
    // raise b until the envelope covers every measured point
    let mut b = log_b.exp();
    for (i, d) in distances.iter().enumerate().filter(|(_, d)| **d > 0.0) {
        b = b.max(d / k.powi(i as i32 + 1));
    }
    Ok(MixingProfile { b, k, distances, fit_start })
}

fn least_squares_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// `estimate_mixing` on the chain of `policy`.
pub fn estimate_policy_mixing(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy, horizon: usize) -> Result<MixingProfile> {
    let chain = mdp.policy_chain(&policy.prob_matrix());
    estimate_mixing(&chain, horizon)
}

/// Best deterministic stationary policy by enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub gain: f64,
    /// Action per state.
    pub policy: Vec<usize>,
}

/// Gain of a deterministic policy: the best gain over its recurrent classes.
pub fn deterministic_gain(mdp: &FiniteMdp, actions: &[usize]) -> f64 {
    let n = mdp.n_states();
    let kernel = DMatrix::from_fn(n, n, |s, j| mdp.prob(s, actions[s], j));
    graph::closed_classes(&kernel)
        .into_iter()
        .map(|class| {
            let m = class.len();
            let sub = DMatrix::from_fn(m, m, |i, j| kernel[(class[i], class[j])]);
            let reward = DVector::from_fn(m, |i, _| mdp.reward(class[i], actions[class[i]]));
            let chain = PolicyChain { kernel: sub, expected_reward: reward };
            exact::stationary_distribution(&chain)
                .map(|mu| mu.dot(&chain.expected_reward))
                .unwrap_or(f64::NEG_INFINITY)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn decode(mut index: usize, n_states: usize, n_actions: usize) -> Vec<usize> {
    let mut actions = vec![0; n_states];
    for a in actions.iter_mut() {
        *a = index % n_actions;
        index /= n_actions;
    }
    actions
}

/// Enumerates all `n_actions^n_states` deterministic policies.
///
/// Ties in gain resolve to the smallest policy index, so the parallel
/// reduction is deterministic.
pub fn brute_force_optimum(mdp: &FiniteMdp) -> Result<Optimum> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let count = (m as f64).powi(n as i32);
    if count > ENUMERATION_BUDGET as f64 {
        return Err(Error::BudgetExceeded { policies: count, budget: ENUMERATION_BUDGET });
    }
    let (gain, index) = (0..count as usize)
        .into_par_iter()
        .map(|i| (deterministic_gain(mdp, &decode(i, n, m)), i))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |x, y| match x.0.partial_cmp(&y.0) {
                Some(std::cmp::Ordering::Greater) => x,
                Some(std::cmp::Ordering::Less) => y,
                _ => {
                    if x.1 <= y.1 {
                        x
                    } else {
                        y
                    }
                }
            },
        );
    Ok(Optimum { gain, policy: decode(index, n, m) })
}

/// Optimal gain of a communicating MDP by relative value iteration on the
/// aperiodic transform `P' = ½(P + I)`, `R' = ½R` (gain halves, bias unchanged).
pub fn optimal_gain(mdp: &FiniteMdp, tol: f64, max_iter: usize) -> Result<Optimum> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let tau = 0.5;
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut policy = vec![0; n];
    for _ in 0..max_iter {
        for s in 0..n {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for a in 0..m {
                let look: f64 = mdp.transition_row(s, a).iter().zip(&h).map(|(p, v)| p * v).sum();
                let q = tau * mdp.reward(s, a) + tau * look + (1.0 - tau) * h[s];
                if q > best {
                    best = q;
                    arg = a;
                }
            }
            next[s] = best;
            policy[s] = arg;
        }
        let diffs: Vec<f64> = next.iter().zip(&h).map(|(x, y)| x - y).collect();
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        let anchor = next[0];
        for (hv, nv) in h.iter_mut().zip(&next) {
            *hv = nv - anchor;
        }
        if hi - lo < tol * tau {
            return Ok(Optimum { gain: 0.5 * (hi + lo) / tau, policy });
        }
    }
    Err(Error::InsufficientData(format!("relative value iteration did not converge in {max_iter} sweeps")))
}
