//! Closed-form policy evaluation for the average-reward criterion.
//!
//! Everything here is a dense linear solve on `n_states x n_states` systems.
//! The bias is normalized by `μ_θᵀV = 0`, which with the fundamental matrix
//! `Z = (I − P_θ + eμ_θᵀ)^{-1}` gives `V = Z(R_θ − L e)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph;
use crate::mdp::{FiniteMdp, PolicyChain};
use crate::policy::SoftmaxLinearPolicy;

const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Stationary distribution of a chain with exactly one closed class.
///
/// Solves `(P_θᵀ − I)μ = 0` with the last equation replaced by `Σμ = 1`.
pub fn stationary_distribution(chain: &PolicyChain) -> Result<DVector<f64>> {
    chain.require_single_class()?;
    let n = chain.n_states();
    let mut system = chain.kernel.transpose() - DMatrix::identity(n, n);
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mut mu = system
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularSystem("stationary distribution"))?;
    if (&system * &mu - &rhs).amax() > SOLVE_RESIDUAL_TOL || mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::SingularSystem("stationary distribution"));
    }
    // transient states come back as ±1e-17
    mu.apply(|m| *m = m.max(0.0));
    let total = mu.sum();
    mu /= total;
    Ok(mu)
}

/// `Z = (I − P + eμᵀ)^{-1}`.
pub fn fundamental_matrix(kernel: &DMatrix<f64>, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = kernel.nrows();
    let ones = DVector::from_element(n, 1.0);
    let m = DMatrix::identity(n, n) - kernel + &ones * mu.transpose();
    let z = m.clone().try_inverse().ok_or(Error::SingularSystem("fundamental matrix"))?;
    if (&m * &z - DMatrix::identity(n, n)).amax() > SOLVE_RESIDUAL_TOL {
        return Err(Error::SingularSystem("fundamental matrix"));
    }
    Ok(z)
}

/// All exact population quantities of one policy on one MDP.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    /// `π_θ(a|s)`, `n_states x n_actions`.
    pub probs: DMatrix<f64>,
    pub chain: PolicyChain,
    pub mu: DVector<f64>,
    pub gain: f64,
    pub fundamental: DMatrix<f64>,
    /// Differential value `V^θ`, normalized by `μᵀV = 0`.
    pub value: DVector<f64>,
    /// `Q_θ(s,a) = R(s,a) − L + Σ_{s'} P(s'|s,a) V(s')`.
    pub q: DMatrix<f64>,
    /// Period of the recurrent class; values above 1 mean the bias series does
    /// not converge and `V` is only the Cesàro-normalized solution.
    pub period: usize,
}

impl PolicyEvaluation {
    pub fn new(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Result<Self> {
        check_dims(mdp, policy)?;
        let probs = policy.prob_matrix();
        Self::from_probs(mdp, probs)
    }

    /// Evaluation for an arbitrary stationary policy given as a probability table.
    pub fn from_probs(mdp: &FiniteMdp, probs: DMatrix<f64>) -> Result<Self> {
        let chain = mdp.policy_chain(&probs);
        let mu = stationary_distribution(&chain)?;
        let gain = mu.dot(&chain.expected_reward);
        let fundamental = fundamental_matrix(&chain.kernel, &mu)?;
        let n = mdp.n_states();
        let centered = &chain.expected_reward - DVector::from_element(n, gain);
        let value = &fundamental * centered;
        let mut q = DMatrix::zeros(n, mdp.n_actions());
        for s in 0..n {
            for a in 0..mdp.n_actions() {
                let next: f64 = mdp.transition_row(s, a).iter().zip(value.iter()).map(|(p, v)| p * v).sum();
                q[(s, a)] = mdp.reward(s, a) - gain + next;
            }
        }
        let period = graph::period_of_closed_class(&chain.kernel).unwrap_or(1);
        Ok(Self { probs, chain, mu, gain, fundamental, value, q, period })
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period == 1
    }

    /// `A_θ(s,a) = Q_θ(s,a) − V^θ(s)`.
    pub fn advantage(&self) -> DMatrix<f64> {
        let mut adv = self.q.clone();
        for (s, mut row) in adv.row_iter_mut().enumerate() {
            row.add_scalar_mut(-self.value[s]);
        }
        adv
    }

    /// `max_s |(R_θ − L e + P_θ V − V)(s)|`.
    pub fn bellman_residual(&self) -> f64 {
        let n = self.value.len();
        let lhs = &self.chain.expected_reward - DVector::from_element(n, self.gain) + &self.chain.kernel * &self.value
            - &self.value;
        lhs.amax()
    }

    /// `Σ_s μ(s) Σ_a π(a|s) w(s,a) ψ_{sa}` for a state-action weight table `w`.
    pub fn score_weighted(&self, policy: &SoftmaxLinearPolicy, weights: &DMatrix<f64>) -> DVector<f64> {
        let feats = policy.features();
        let mut out = DVector::zeros(policy.dim());
        let mut psi = vec![0.0; policy.dim()];
        for s in 0..self.mu.len() {
            let probs: Vec<f64> = self.probs.row(s).iter().copied().collect();
            for a in 0..probs.len() {
                let w = self.mu[s] * probs[a] * weights[(s, a)];
                if w == 0.0 {
                    continue;
                }
                feats.score_into(&probs, s, a, &mut psi);
                for (o, p) in out.iter_mut().zip(&psi) {
                    *o += w * p;
                }
            }
        }
        out
    }

    /// `∂P_θ/∂θ_j` for every coordinate, as `dim` matrices.
    pub fn kernel_derivatives(&self, mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Vec<DMatrix<f64>> {
        let n = mdp.n_states();
        let d = policy.dim();
        let feats = policy.features();
        let mut out = vec![DMatrix::zeros(n, n); d];
        let mut psi = vec![0.0; d];
        for s in 0..n {
            let probs: Vec<f64> = self.probs.row(s).iter().copied().collect();
            for a in 0..mdp.n_actions() {
                feats.score_into(&probs, s, a, &mut psi);
                let row = mdp.transition_row(s, a);
                for (j, dj) in out.iter_mut().enumerate() {
                    // ∂π(a|s)/∂θ_j = π(a|s) ψ_j
                    let dpi = probs[a] * psi[j];
                    if dpi == 0.0 {
                        continue;
                    }
                    for (next, p) in row.iter().enumerate() {
                        dj[(s, next)] += dpi * p;
                    }
                }
            }
        }
        out
    }
}

fn check_dims(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{}, MDP is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// `L(θ) = Σ_s μ_θ(s) Σ_a π_θ(a|s) R(s,a)`.
pub fn average_reward(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Result<f64> {
    check_dims(mdp, policy)?;
    let chain = mdp.policy_chain(&policy.prob_matrix());
    let mu = stationary_distribution(&chain)?;
    Ok(mu.dot(&chain.expected_reward))
}

pub fn differential_value(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Result<DVector<f64>> {
    Ok(PolicyEvaluation::new(mdp, policy)?.value)
}

pub fn q_value(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Result<DMatrix<f64>> {
    Ok(PolicyEvaluation::new(mdp, policy)?.q)
}

/// Policy gradient theorem: `∇L = E_{μ,π}[A_θ(s,a) ∇log π_θ(a|s)]`.
pub fn policy_gradient(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Result<DVector<f64>> {
    let eval = PolicyEvaluation::new(mdp, policy)?;
    Ok(eval.score_weighted(policy, &eval.advantage()))
}

/// `∇_θ μ_θ` as a `dim x n_states` matrix; row `j` is `μᵀ (∂P/∂θ_j) Z`.
pub fn grad_stationary(mdp: &FiniteMdp, policy: &SoftmaxLinearPolicy) -> Result<DMatrix<f64>> {
    let eval = PolicyEvaluation::new(mdp, policy)?;
    let n = mdp.n_states();
    let derivs = eval.kernel_derivatives(mdp, policy);
    let mut out = DMatrix::zeros(policy.dim(), n);
    let mu_t = eval.mu.transpose();
    for (j, dp) in derivs.iter().enumerate() {
        let row = &mu_t * dp * &eval.fundamental;
        out.row_mut(j).copy_from(&row);
    }
    Ok(out)
}
