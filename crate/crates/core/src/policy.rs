//! Softmax-linear actors: `π_θ(a|s) ∝ exp(θᵀx(s,a))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Action feature table `x(s, a) ∈ R^d`, stored flat as `[s][a][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFeatures {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    table: Vec<f64>,
}

impl ActionFeatures {
    /// One indicator per `(s, a)` pair, `d = n_states * n_actions`.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        let dim = n_states * n_actions;
        let mut table = vec![0.0; n_states * n_actions * dim];
        for s in 0..n_states {
            for a in 0..n_actions {
                let j = s * n_actions + a;
                table[j * dim + j] = 1.0;
            }
        }
        Self { n_states, n_actions, dim, table }
    }

    /// All-zero features: the policy is uniform for every θ.
    pub fn zeros(n_states: usize, n_actions: usize, dim: usize) -> Self {
        Self { n_states, n_actions, dim, table: vec![0.0; n_states * n_actions * dim] }
    }

    pub fn from_nested(table: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_states = table.len();
        let n_actions = table.first().map_or(0, Vec::len);
        let dim = table.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 || dim == 0 {
            return Err(Error::InvalidSpec("action features need states, actions and dim > 0".into()));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * dim);
        for (s, row) in table.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch(format!("action_features[{s}] has {} actions", row.len())));
            }
            for (a, x) in row.iter().enumerate() {
                if x.len() != dim {
                    return Err(Error::DimensionMismatch(format!("action_features[{s}][{a}] has dim {}", x.len())));
                }
                flat.extend_from_slice(x);
            }
        }
        Ok(Self { n_states, n_actions, dim, table: flat })
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.x(s, a).to_vec()).collect())
            .collect()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn x(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.dim;
        &self.table[start..start + self.dim]
    }

    /// `max_{s,a} ‖x(s,a)‖`.
    pub fn max_norm(&self) -> f64 {
        self.table
            .chunks(self.dim.max(1))
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Writes `π_θ(·|s)` into `out` (length `n_actions`).
    pub fn probs_into(&self, theta: &[f64], s: usize, out: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.dim);
        let mut max = f64::NEG_INFINITY;
        for (a, o) in out.iter_mut().enumerate() {
            let logit: f64 = self.x(s, a).iter().zip(theta).map(|(x, t)| x * t).sum();
            *o = logit;
            max = max.max(logit);
        }
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }

    /// Writes `∇_θ log π_θ(a|s) = x(s,a) − Σ_b π(b|s) x(s,b)` into `out`.
    pub fn score_into(&self, probs: &[f64], s: usize, a: usize, out: &mut [f64]) {
        out.copy_from_slice(self.x(s, a));
        for (b, pb) in probs.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.x(s, b)) {
                *o -= pb * x;
            }
        }
    }
}

/// A softmax-linear policy: shared action features plus a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinearPolicy {
    features: Arc<ActionFeatures>,
    theta: DVector<f64>,
}

impl SoftmaxLinearPolicy {
    pub fn new(features: Arc<ActionFeatures>, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != features.dim() {
            return Err(Error::DimensionMismatch(format!(
                "theta has dim {}, action features have dim {}",
                theta.len(),
                features.dim()
            )));
        }
        Ok(Self { features, theta })
    }

    /// θ = 0: uniform over actions in every state.
    pub fn zero(features: Arc<ActionFeatures>) -> Self {
        let theta = DVector::zeros(features.dim());
        Self { features, theta }
    }

    /// θ with i.i.d. `N(0, scale²)` coordinates.
    pub fn gaussian<R: Rng + ?Sized>(features: Arc<ActionFeatures>, scale: f64, rng: &mut R) -> Self {
        let theta = DVector::from_fn(features.dim(), |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        Self { features, theta }
    }

    pub fn features(&self) -> &Arc<ActionFeatures> {
        &self.features
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn n_states(&self) -> usize {
        self.features.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.features.n_actions()
    }

    pub fn with_theta(&self, theta: DVector<f64>) -> Self {
        debug_assert_eq!(theta.len(), self.theta.len());
        Self { features: Arc::clone(&self.features), theta }
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions()];
        self.features.probs_into(self.theta.as_slice(), s, &mut out);
        out
    }

    /// `π_θ(a|s)` as an `n_states x n_actions` matrix.
    pub fn prob_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n_states(), self.n_actions());
        let mut out = DMatrix::zeros(n, m);
        let mut buf = vec![0.0; m];
        for s in 0..n {
            self.features.probs_into(self.theta.as_slice(), s, &mut buf);
            for a in 0..m {
                out[(s, a)] = buf[a];
            }
        }
        out
    }

    /// `ψ_{sa} = ∇_θ log π_θ(a|s)`.
    pub fn score(&self, s: usize, a: usize) -> DVector<f64> {
        let probs = self.probs(s);
        let mut out = DVector::zeros(self.dim());
        self.features.score_into(&probs, s, a, out.as_mut_slice());
        out
    }

    /// Score-function bound `B = 2 max ‖x(s,a)‖`.
    pub fn score_bound(&self) -> f64 {
        2.0 * self.features.max_norm()
    }
}
