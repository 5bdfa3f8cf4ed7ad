//! Assumption report: feature checks, negative definiteness of `A`,
//! uniform ergodicity, step-size constants and schedule validity.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{check_assumption2, AssumptionReport, FeatureChecks, MixingSummary, PolicyFamily};
use crate::learner::{validate_schedule, Algorithm, Problem, ScheduleValidity, StepSchedule};
use crate::oracles::{estimate_policy_mixing, MixingProfile};

/// Steps at which `τ_t` is reported.
const TAU_STEPS: [u64; 4] = [1_000, 10_000, 100_000, 1_000_000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub policy_samples: usize,
    pub theta_scale: f64,
    pub seed: u64,
    pub mixing_horizon: usize,
    /// Critic radius for the constants; the report default when `None`.
    pub critic_radius: Option<f64>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { policy_samples: 20, theta_scale: 1.0, seed: 0, mixing_horizon: 200, critic_radius: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub assumption: u8,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub features: FeatureChecks,
    /// `None` when the sampled checks could not run (e.g. rank-deficient Φ).
    pub report: Option<AssumptionReport>,
    pub schedule: Option<ScheduleValidity>,
    pub verdicts: Vec<Verdict>,
    /// Non-fatal findings, including the step-size ratio gate.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, assumption: u8) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.assumption == assumption)
    }
}

fn summarize_mixing(
    problem: &Problem,
    family: &PolicyFamily,
    opts: &ValidationOptions,
    sched: &StepSchedule,
    algo: Algorithm,
) -> MixingSummary {
    let mut profiles = Vec::with_capacity(opts.policy_samples + 1);
    for policy in family.sample(opts.policy_samples, opts.seed) {
        match estimate_policy_mixing(&problem.mdp, &policy, opts.mixing_horizon) {
            Ok(p) => profiles.push(p),
            Err(e) => {
                return MixingSummary { b: None, k: None, tau: Vec::new(), pass: false, error: Some(e.to_string()) }
            }
        }
    }
    // worst rate and worst prefactor together envelope every sampled chain
    let k = profiles.iter().map(|p| p.k).fold(0.0, f64::max);
    let b = profiles.iter().map(|p| p.b).fold(0.0, f64::max);
    let envelope = MixingProfile { b, k, distances: Vec::new(), fit_start: 1 };
    MixingSummary {
        b: Some(b),
        k: Some(k),
        tau: TAU_STEPS.iter().map(|&t| (t, envelope.tau_of(sched, algo, t))).collect(),
        pass: envelope.k < 1.0,
        error: None,
    }
}

/// Runs every validator. Only unreadable input is an `Err`; failed
/// assumptions are reported as verdicts.
pub fn validate(
    problem: &Problem,
    sched: &StepSchedule,
    algo: Algorithm,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let features = problem.critic.checks();
    let family = PolicyFamily::new(problem.actor.clone(), opts.theta_scale);
    let mut warnings = Vec::new();
    let mut verdicts = vec![Verdict {
        assumption: 1,
        pass: features.norm_ok,
        detail: format!("max ‖φ(s)‖ = {:.6}, rank {} of {}", features.max_norm, features.rank, problem.critic.dim()),
    }];

    let report = match check_assumption2(&problem.mdp, &family, &problem.critic, opts.policy_samples, opts.seed) {
        Ok(r) => Some(r),
        Err(e) if e.is_input_error() => return Err(e),
        Err(e) => {
            verdicts.push(Verdict { assumption: 2, pass: false, detail: e.to_string() });
            None
        }
    };
    let mixing = summarize_mixing(problem, &family, opts, sched, algo);
    let mut schedule = None;
    let report = report.map(|mut r| {
        if let Some(u_v) = opts.critic_radius {
            r = r.with_critic_radius(u_v);
        }
        let detail = if !r.features.e_excluded {
            format!("e lies in span(Φ) (residual {:.3e}); λ_θ max = {:.3e}", r.features.e_residual, -r.lambda)
        } else {
            format!("λ = {:.6e} over {} sampled θ", r.lambda, r.lambda_theta.len())
        };
        verdicts.push(Verdict { assumption: 2, pass: r.assumption2_pass, detail });
        let validity = validate_schedule(sched, &r);
        warnings.extend(validity.warnings());
        schedule = Some(validity);
        r.mixing = Some(mixing.clone());
        r
    });
    verdicts.push(Verdict {
        assumption: 3,
        pass: mixing.pass,
        detail: match &mixing.error {
            Some(e) => e.clone(),
            None => format!("b = {:.4}, k = {:.4}", mixing.b.unwrap_or(f64::NAN), mixing.k.unwrap_or(f64::NAN)),
        },
    });
    if !features.rank_ok {
        warnings.push(format!("feature matrix has rank {} < {}", features.rank, problem.critic.dim()));
    }
    Ok(ValidationReport { features, report, schedule, verdicts, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, GarnetSpec};
    use crate::features::{make_features, FeatureKind, FeatureMap};

    fn run(problem: &Problem) -> ValidationReport {
        let opts = ValidationOptions { policy_samples: 5, ..Default::default() };
        validate(problem, &StepSchedule::critic_actor(), Algorithm::CriticActor, &opts).unwrap()
    }

    #[test]
    fn garnet_passes() {
        let mdp = envs::build_garnet(&GarnetSpec::new(6, 3, 3, 0.05, 1)).unwrap();
        let critic = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        let r = run(&Problem::tabular_actor(mdp, critic).unwrap());
        assert!(r.all_pass(), "{:?}", r.verdicts);
        let rep = r.report.unwrap();
        assert!(rep.lambda > 0.0);
        assert!(rep.mixing.unwrap().k.unwrap() < 1.0);
    }

    #[test]
    fn full_one_hot_fails_negative_definiteness() {
        let mdp = envs::easy4();
        let critic = FeatureMap::one_hot_full(mdp.n_states());
        let r = run(&Problem::tabular_actor(mdp, critic).unwrap());
        assert!(!r.verdict(2).unwrap().pass);
        assert!(r.report.unwrap().lambda.abs() < 1e-8);
    }

    #[test]
    fn cycle_fails_ergodicity() {
        let mdp = envs::two_cycle();
        let critic = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        let r = run(&Problem::tabular_actor(mdp, critic).unwrap());
        let v3 = r.verdict(3).unwrap();
        assert!(!v3.pass);
        assert!(v3.detail.contains("periodic"), "{}", v3.detail);
    }
}
