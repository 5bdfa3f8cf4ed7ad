//! Critic feature maps `φ(s) ∈ R^{d_1}` and the negative-definiteness check on
//! the TD matrix `A = E[φ(s)(φ(s') − φ(s))ᵀ]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::PolicyEvaluation;
use crate::mdp::FiniteMdp;
use crate::policy::{ActionFeatures, SoftmaxLinearPolicy};

/// Minimum least-squares residual when fitting `e` by the columns of `Φ`.
pub const E_EXCLUSION_TOL: f64 = 1e-6;
/// `λ_θ` must be below `-NEG_DEF_TOL` for a PASS.
pub const NEG_DEF_TOL: f64 = 1e-8;
const NORM_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureKind {
    /// Indicators of states `0..n-1`; the last state maps to the zero vector.
    OneHotReduced,
    /// I.i.d. Gaussian rows rescaled so that `max_s ‖φ(s)‖ = 1`.
    RandomUnit { dim: usize },
    /// Indicators of states `0..n-1` minus `1/n`.
    TabularCentered,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_hot_reduced" => Ok(Self::OneHotReduced),
            "tabular_centered" => Ok(Self::TabularCentered),
            other => match other.strip_prefix("random_unit:") {
                Some(d) => d
                    .parse()
                    .map(|dim| Self::RandomUnit { dim })
                    .map_err(|_| Error::Parse(format!("bad dimension in feature kind {other:?}"))),
                None => Err(Error::Parse(format!("unknown feature kind {other:?}"))),
            },
        }
    }
}

/// Structural checks on a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureChecks {
    pub max_norm: f64,
    pub norm_ok: bool,
    pub rank: usize,
    pub rank_ok: bool,
    /// `‖e − Φ Φ⁺ e‖`.
    pub e_residual: f64,
    pub e_excluded: bool,
}

impl FeatureChecks {
    pub fn all_ok(&self) -> bool {
        self.norm_ok && self.rank_ok && self.e_excluded
    }
}

/// A critic feature map. Rows of `Φ` are the state features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    n_states: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl FeatureMap {
    /// Validated construction: norm bound, full column rank, `e ∉ span(Φ)`.
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        let map = Self::unchecked(phi);
        let checks = map.checks();
        if !checks.norm_ok {
            return Err(Error::InvariantViolation(format!(
                "feature norm {} exceeds 1",
                checks.max_norm
            )));
        }
        if !checks.rank_ok {
            return Err(Error::RankDeficient { rank: checks.rank, dim: map.dim });
        }
        if !checks.e_excluded {
            return Err(Error::InvariantViolation(format!(
                "all-ones vector lies in the feature span (residual {:.3e})",
                checks.e_residual
            )));
        }
        Ok(map)
    }

    /// No invariant checks; used to exercise the validators on bad maps.
    pub fn unchecked(phi: DMatrix<f64>) -> Self {
        let (n_states, dim) = phi.shape();
        let mut rows = Vec::with_capacity(n_states * dim);
        for s in 0..n_states {
            rows.extend(phi.row(s).iter());
        }
        Self { n_states, dim, rows }
    }

    pub fn from_nested(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("feature rows must be non-empty and equal length".into()));
        }
        Self::new(DMatrix::from_row_iterator(n, d, rows.into_iter().flatten()))
    }

    /// Full one-hot `Φ = I`; the columns sum to `e`, so this map is never valid.
    pub fn one_hot_full(n_states: usize) -> Self {
        Self::unchecked(DMatrix::identity(n_states, n_states))
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn phi(&self, s: usize) -> &[f64] {
        &self.rows[s * self.dim..(s + 1) * self.dim]
    }

    #[inline]
    pub fn value(&self, s: usize, v: &[f64]) -> f64 {
        self.phi(s).iter().zip(v).map(|(p, w)| p * w).sum()
    }

    /// `Φ` as an `n_states x dim` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_states, self.dim, &self.rows)
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.rows.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn checks(&self) -> FeatureChecks {
        let phi = self.matrix();
        let max_norm = phi.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        let svd = phi.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|s| **s > RANK_TOL * smax.max(1.0)).count();
        let ones = DVector::from_element(self.n_states, 1.0);
        let e_residual = match svd.solve(&ones, RANK_TOL) {
            Ok(coef) => (&ones - &phi * coef).norm(),
            Err(_) => ones.norm(),
        };
        FeatureChecks {
            max_norm,
            norm_ok: max_norm <= 1.0 + NORM_TOL,
            rank,
            rank_ok: rank == self.dim && self.dim <= self.n_states,
            e_residual,
            e_excluded: e_residual >= E_EXCLUSION_TOL,
        }
    }
}

/// Builds a feature map of the requested kind for `mdp`.
pub fn make_features(kind: FeatureKind, mdp: &FiniteMdp, seed: u64) -> Result<FeatureMap> {
    let n = mdp.n_states();
    if n < 2 {
        return Err(Error::InfeasibleDimension(
            "a single-state chain cannot exclude e from a non-empty feature span".into(),
        ));
    }
    match kind {
        FeatureKind::OneHotReduced => FeatureMap::new(DMatrix::from_fn(n, n - 1, |s, j| f64::from(s == j))),
        FeatureKind::TabularCentered => {
            let inv = 1.0 / n as f64;
            FeatureMap::new(DMatrix::from_fn(n, n - 1, |s, j| f64::from(s == j) - inv))
        }
        FeatureKind::RandomUnit { dim } => {
            if dim == 0 || dim > n - 1 {
                return Err(Error::InfeasibleDimension(format!(
                    "random_unit needs 1 <= dim <= n_states - 1 = {}, got {dim}",
                    n - 1
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..MAX_REDRAWS {
                let mut phi = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let max = phi.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
                phi /= max;
                if let Ok(map) = FeatureMap::new(phi) {
                    return Ok(map);
                }
            }
            Err(Error::InfeasibleDimension(format!(
                "no valid random_unit map of dim {dim} after {MAX_REDRAWS} draws"
            )))
        }
    }
}

/// `A = Φᵀ D_μ (P_θ − I) Φ` and `b = Φᵀ D_μ (R_θ − L e)` from an evaluation.
pub fn td_system(eval: &PolicyEvaluation, features: &FeatureMap) -> (DMatrix<f64>, DVector<f64>) {
    let phi = features.matrix();
    let n = phi.nrows();
    let weighted = DMatrix::from_fn(n, phi.ncols(), |s, j| eval.mu[s] * phi[(s, j)]);
    let a = weighted.transpose() * (&eval.chain.kernel * &phi - &phi);
    let centered = &eval.chain.expected_reward - DVector::from_element(n, eval.gain);
    let b = weighted.transpose() * centered;
    (a, b)
}

/// The pair `(A, b)` whose root `A v + b = 0` is the critic fixed point.
pub fn matrix_a(
    mdp: &FiniteMdp,
    policy: &SoftmaxLinearPolicy,
    features: &FeatureMap,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_feature_states(mdp, features)?;
    let eval = PolicyEvaluation::new(mdp, policy)?;
    Ok(td_system(&eval, features))
}

pub(crate) fn check_feature_states(mdp: &FiniteMdp, features: &FeatureMap) -> Result<()> {
    if features.n_states() != mdp.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "feature map covers {} states, MDP has {}",
            features.n_states(),
            mdp.n_states()
        )));
    }
    Ok(())
}

/// Largest eigenvalue of `(A + Aᵀ)/2`.
pub fn sym_max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.max()
}

/// Softmax-linear policies over fixed action features, sampled as
/// `θ ~ N(0, theta_scale² I)` plus `θ = 0`.
#[derive(Debug, Clone)]
pub struct PolicyFamily {
    pub features: Arc<ActionFeatures>,
    pub theta_scale: f64,
}

impl PolicyFamily {
    pub fn new(features: Arc<ActionFeatures>, theta_scale: f64) -> Self {
        Self { features, theta_scale }
    }

    /// `θ = 0` followed by `n` Gaussian draws.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<SoftmaxLinearPolicy> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        std::iter::once(SoftmaxLinearPolicy::zero(Arc::clone(&self.features)))
            .chain((0..n).map(|_| SoftmaxLinearPolicy::gaussian(Arc::clone(&self.features), self.theta_scale, &mut rng)))
            .collect()
    }
}

/// Geometric mixing estimate as stored in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSummary {
    /// Worst prefactor over the sampled policies; `None` if some chain does not mix.
    pub b: Option<f64>,
    /// Worst rate over the sampled policies.
    pub k: Option<f64>,
    /// `(t, τ_t)` under the schedule the report was built against.
    pub tau: Vec<(u64, usize)>,
    pub pass: bool,
    pub error: Option<String>,
}

/// Constants of the finite-time step-size condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Score bound `B = 2 max ‖x‖`.
    pub score_bound: f64,
    /// Smoothness of the score for softmax-linear policies, `max ‖x‖²`.
    pub score_smoothness: f64,
    /// Lipschitz constant of `π_θ(a|s)` in θ, `max ‖x‖ / 2`.
    pub policy_lipschitz: f64,
    pub u_r: f64,
    /// Critic projection radius `U_v`.
    pub u_v: f64,
    /// Estimated bound `Ū_v` on `|V^θ(s)|`.
    pub u_v_bar: f64,
    /// `G = 2 (U_r + U_v) B`.
    pub g: f64,
    /// `U_w = 2 B (U_v + Ū_v)`.
    pub u_w: f64,
    /// `1 / (2B(G + U_w) + U_w B)`.
    pub ratio_bound: f64,
}

impl Constants {
    pub fn new(max_action_feature_norm: f64, u_r: f64, u_v: f64, u_v_bar: f64) -> Self {
        let b = 2.0 * max_action_feature_norm;
        let g = 2.0 * (u_r + u_v) * b;
        let u_w = 2.0 * b * (u_v + u_v_bar);
        let ratio_bound = 1.0 / (2.0 * b * (g + u_w) + u_w * b);
        Self {
            score_bound: b,
            score_smoothness: max_action_feature_norm.powi(2),
            policy_lipschitz: max_action_feature_norm / 2.0,
            u_r,
            u_v,
            u_v_bar,
            g,
            u_w,
            ratio_bound,
        }
    }
}

/// Outcome of the feature and negative-definiteness validators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub features: FeatureChecks,
    /// `λ_θ` for each sampled θ, `θ = 0` first.
    pub lambda_theta: Vec<f64>,
    /// `−max λ_θ`: a sampled estimate, not a certificate over all θ.
    pub lambda: f64,
    /// Largest `xᵀAx` over random unit `x` and all sampled θ.
    pub quadratic_form_max: f64,
    pub assumption1_pass: bool,
    pub assumption2_pass: bool,
    /// `‖v*(0)‖` when `A(0)` is invertible.
    pub critic_fixed_point_norm: Option<f64>,
    /// `max_θ ‖V^θ‖_∞` over the samples.
    pub max_value_sup: f64,
    pub mixing: Option<MixingSummary>,
    pub constants: Constants,
}

impl AssumptionReport {
    /// Recomputes the step-size constants for a different projection radius.
    pub fn with_critic_radius(mut self, u_v: f64) -> Self {
        let x = self.constants.score_bound / 2.0;
        self.constants = Constants::new(x, self.constants.u_r, u_v, self.constants.u_v_bar);
        self
    }

    pub fn all_pass(&self) -> bool {
        self.assumption1_pass && self.assumption2_pass && self.mixing.as_ref().is_some_and(|m| m.pass)
    }
}

/// Default critic radius: ten times `‖v*(θ_0)‖`, never below 1.
pub fn default_critic_radius(v_star_norm: Option<f64>) -> f64 {
    v_star_norm.map_or(10.0, |n| (10.0 * n).max(1.0))
}

/// Samples θ and certifies `sup_θ λ_θ < 0` on the sample.
pub fn check_assumption2(
    mdp: &FiniteMdp,
    family: &PolicyFamily,
    features: &FeatureMap,
    n_theta_samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_theta_samples == 0 {
        return Err(Error::InvalidSpec("n_theta_samples must be at least 1".into()));
    }
    check_feature_states(mdp, features)?;
    let checks = features.checks();
    if !checks.rank_ok {
        return Err(Error::RankDeficient { rank: checks.rank, dim: features.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let probes: Vec<DVector<f64>> = (0..100)
        .map(|_| {
            let x = DVector::from_fn(features.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = x.norm();
            x / n
        })
        .collect();

    let mut lambda_theta = Vec::with_capacity(n_theta_samples + 1);
    let mut quadratic_form_max = f64::NEG_INFINITY;
    let mut max_value_sup: f64 = 0.0;
    let mut critic_fixed_point_norm = None;
    for (i, policy) in family.sample(n_theta_samples, seed).iter().enumerate() {
        let eval = PolicyEvaluation::new(mdp, policy)?;
        let (a, b) = td_system(&eval, features);
        let lam = sym_max_eigenvalue(&a);
        lambda_theta.push(lam);
        for x in &probes {
            quadratic_form_max = quadratic_form_max.max(x.dot(&(&a * x)));
        }
        max_value_sup = max_value_sup.max(eval.value.amax());
        if i == 0 && lam < -NEG_DEF_TOL {
            critic_fixed_point_norm = a.lu().solve(&(-b)).map(|v| v.norm());
        }
    }
    let sup = lambda_theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let u_v = default_critic_radius(critic_fixed_point_norm);
    let constants = Constants::new(family.features.max_norm(), mdp.reward_bound(), u_v, 2.0 * max_value_sup);
    Ok(AssumptionReport {
        assumption1_pass: checks.norm_ok,
        assumption2_pass: checks.e_excluded && sup < -NEG_DEF_TOL,
        features: checks,
        lambda_theta,
        lambda: -sup,
        quadratic_form_max,
        critic_fixed_point_norm,
        max_value_sup,
        mixing: None,
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positive_mdp(n: usize, m: usize) -> FiniteMdp {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        let row: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
                        let z: f64 = row.iter().sum();
                        row.into_iter().map(|x| x / z).collect()
                    })
                    .collect()
            })
            .collect();
        let r = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        FiniteMdp::new(p, r, 1.0).unwrap()
    }

    #[test]
    fn one_hot_reduced_layout() {
        let mdp = positive_mdp(3, 2);
        let f = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        assert_eq!(f.matrix(), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn random_unit_has_max_norm_one() {
        let mdp = positive_mdp(6, 2);
        for seed in 0..10 {
            let f = make_features(FeatureKind::RandomUnit { dim: 3 }, &mdp, seed).unwrap();
            let c = f.checks();
            assert!((c.max_norm - 1.0).abs() < 1e-15, "{}", c.max_norm);
            assert!(c.all_ok());
        }
    }

    #[test]
    fn random_unit_rejects_dim_n() {
        let mdp = positive_mdp(4, 2);
        assert!(matches!(
            make_features(FeatureKind::RandomUnit { dim: 4 }, &mdp, 0),
            Err(Error::InfeasibleDimension(_))
        ));
    }

    #[test]
    fn tabular_centered_excludes_e() {
        let mdp = positive_mdp(5, 2);
        let f = make_features(FeatureKind::TabularCentered, &mdp, 0).unwrap();
        assert!(f.checks().all_ok());
    }

    #[test]
    fn full_one_hot_is_rejected() {
        let err = FeatureMap::new(DMatrix::identity(4, 4)).unwrap_err();
        assert!(err.to_string().contains("all-ones"));
        assert!(!FeatureMap::one_hot_full(4).checks().e_excluded);
    }

    #[test]
    fn constant_reward_gives_zero_b() {
        let mdp = positive_mdp(4, 2);
        let flat = FiniteMdp::new(mdp.transition_nested(), vec![vec![0.3; 2]; 4], 1.0).unwrap();
        let f = make_features(FeatureKind::OneHotReduced, &flat, 0).unwrap();
        let pol = SoftmaxLinearPolicy::zero(Arc::new(ActionFeatures::tabular(4, 2)));
        let (_, b) = matrix_a(&flat, &pol, &f).unwrap();
        assert!(b.amax() < 1e-16);
    }

    #[test]
    fn one_hot_reduced_a_is_block_of_d_mu_p_minus_i() {
        let mdp = positive_mdp(4, 3);
        let f = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pol = SoftmaxLinearPolicy::gaussian(Arc::new(ActionFeatures::tabular(4, 3)), 1.0, &mut rng);
        let (a, _) = matrix_a(&mdp, &pol, &f).unwrap();
        let eval = PolicyEvaluation::new(&mdp, &pol).unwrap();
        let full = DMatrix::from_diagonal(&eval.mu) * (&eval.chain.kernel - DMatrix::identity(4, 4));
        assert!((a - full.view((0, 0), (3, 3))).amax() < 1e-15);
    }

    #[test]
    fn assumption2_passes_on_positive_chain() {
        let mdp = positive_mdp(5, 3);
        let f = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        let fam = PolicyFamily::new(Arc::new(ActionFeatures::tabular(5, 3)), 1.0);
        let rep = check_assumption2(&mdp, &fam, &f, 16, 7).unwrap();
        assert!(rep.assumption2_pass);
        assert!(rep.lambda > 0.0);
        assert!(rep.quadratic_form_max < 0.0);
        assert_eq!(rep.lambda_theta.len(), 17);
    }

    #[test]
    fn assumption2_fails_with_e_in_span() {
        // Φ = I, v = e gives Φv = e and A e = D_μ (P − I) e = 0
        let mdp = positive_mdp(4, 2);
        let f = FeatureMap::one_hot_full(4);
        let fam = PolicyFamily::new(Arc::new(ActionFeatures::tabular(4, 2)), 1.0);
        let rep = check_assumption2(&mdp, &fam, &f, 4, 0).unwrap();
        assert!(!rep.assumption2_pass);
        for lam in &rep.lambda_theta {
            assert!(lam.abs() < 1e-12 || *lam > 0.0, "{lam}");
        }
        let pol = SoftmaxLinearPolicy::zero(Arc::new(ActionFeatures::tabular(4, 2)));
        let (a, _) = matrix_a(&mdp, &pol, &f).unwrap();
        assert!((a * DVector::from_element(4, 1.0)).amax() < 1e-15);
    }

    #[test]
    fn zero_features_are_rejected() {
        let mdp = positive_mdp(3, 2);
        let f = FeatureMap::unchecked(DMatrix::zeros(3, 2));
        let fam = PolicyFamily::new(Arc::new(ActionFeatures::tabular(3, 2)), 1.0);
        assert!(matches!(check_assumption2(&mdp, &fam, &f, 1, 0), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn feature_kind_parsing() {
        assert_eq!("random_unit:3".parse::<FeatureKind>().unwrap(), FeatureKind::RandomUnit { dim: 3 });
        assert_eq!("one_hot_reduced".parse::<FeatureKind>().unwrap(), FeatureKind::OneHotReduced);
        assert!("gaussian".parse::<FeatureKind>().is_err());
    }
}
