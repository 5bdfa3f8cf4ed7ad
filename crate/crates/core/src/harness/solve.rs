//! Exact population quantities at one θ, for inspection and scripting.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::PolicyEvaluation;
use crate::features::{sym_max_eigenvalue, td_system};
use crate::learner::Problem;
use crate::oracles::{self, estimate_mixing};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDump {
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub gain: f64,
    pub value: Vec<f64>,
    pub aperiodic: bool,
    /// `None` when `A(θ)` is singular.
    pub v_star: Option<Vec<f64>>,
    /// `‖M(θ, v*)‖`.
    pub actor_field_norm: Option<f64>,
    pub lambda_theta: f64,
    pub mixing_b: Option<f64>,
    pub mixing_k: Option<f64>,
    pub mixing_error: Option<String>,
}

/// Reads θ from a JSON array or an object with a `theta` field.
pub fn load_theta(path: &Path, dim: usize) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let arr = value.get("theta").cloned().unwrap_or(value);
    let theta: Vec<f64> = serde_json::from_value(arr).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if theta.len() != dim {
        return Err(Error::DimensionMismatch(format!("theta has {} entries, actor expects {dim}", theta.len())));
    }
    Ok(DVector::from_vec(theta))
}

pub fn solve_dump(problem: &Problem, theta: &DVector<f64>, mixing_horizon: usize) -> Result<OracleDump> {
    let policy = problem.policy(theta);
    let eval = PolicyEvaluation::new(&problem.mdp, &policy)?;
    let (a, _) = td_system(&eval, &problem.critic);
    let v_star = match oracles::critic_fixed_point_from(&eval, &problem.critic) {
        Ok(v) => Some(v),
        Err(Error::SingularA) => None,
        Err(e) => return Err(e),
    };
    let actor_field_norm =
        v_star.as_ref().map(|v| oracles::actor_field_from(&eval, &problem.mdp, &policy, v, &problem.critic).norm());
    let (mixing_b, mixing_k, mixing_error) = match estimate_mixing(&eval.chain, mixing_horizon) {
        Ok(p) => (Some(p.b), Some(p.k), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(OracleDump {
        theta: theta.iter().copied().collect(),
        mu: eval.mu.iter().copied().collect(),
        gain: eval.gain,
        value: eval.value.iter().copied().collect(),
        aperiodic: eval.is_aperiodic(),
        v_star: v_star.map(|v| v.iter().copied().collect()),
        actor_field_norm,
        lambda_theta: sym_max_eigenvalue(&a),
        mixing_b,
        mixing_k,
        mixing_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::features::{make_features, FeatureKind};

    #[test]
    fn two_cycle_dump() {
        let mdp = envs::two_cycle();
        let critic = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        let p = Problem::tabular_actor(mdp, critic).unwrap();
        let d = solve_dump(&p, &DVector::zeros(p.actor.dim()), 50).unwrap();
        assert!((d.gain - 0.5).abs() < 1e-12);
        assert!((d.value[0] - 0.25).abs() < 1e-12 && (d.value[1] + 0.25).abs() < 1e-12);
        assert!(!d.aperiodic);
        assert!(d.mixing_error.is_some());
    }
}
