use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::schedule::{Algorithm, Rates, StepSchedule};
use super::step::{apply_update, sample_transition, step, LearnerState, StepContext};
use crate::error::{Error, Result};
use crate::exact::PolicyEvaluation;
use crate::features::{check_feature_states, default_critic_radius, FeatureMap};
use crate::mdp::FiniteMdp;
use crate::oracles;
use crate::policy::{ActionFeatures, SoftmaxLinearPolicy};

/// Environment plus the two feature tables.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mdp: FiniteMdp,
    pub critic: FeatureMap,
    pub actor: Arc<ActionFeatures>,
}

impl Problem {
    pub fn new(mdp: FiniteMdp, critic: FeatureMap, actor: Arc<ActionFeatures>) -> Result<Self> {
        check_feature_states(&mdp, &critic)?;
        if actor.n_states() != mdp.n_states() || actor.n_actions() != mdp.n_actions() {
            return Err(Error::DimensionMismatch("action features do not match the MDP".into()));
        }
        Ok(Self { mdp, critic, actor })
    }

    /// Tabular softmax actor.
    pub fn tabular_actor(mdp: FiniteMdp, critic: FeatureMap) -> Result<Self> {
        let actor = Arc::new(ActionFeatures::tabular(mdp.n_states(), mdp.n_actions()));
        Self::new(mdp, critic, actor)
    }

    pub fn policy(&self, theta: &DVector<f64>) -> SoftmaxLinearPolicy {
        SoftmaxLinearPolicy::new(Arc::clone(&self.actor), theta.clone()).expect("theta matches actor dim")
    }

    /// `10 ‖v*(θ = 0)‖`, floored at 1.
    pub fn default_critic_radius(&self) -> Result<f64> {
        let policy = SoftmaxLinearPolicy::zero(Arc::clone(&self.actor));
        let v_star = oracles::critic_fixed_point(&self.mdp, &policy, &self.critic)?;
        Ok(default_critic_radius(Some(v_star.norm())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub algo: Algorithm,
    pub schedule: StepSchedule,
    pub steps: u64,
    pub seed: u64,
    pub metrics_every: u64,
    /// `U_v`; defaults to [`Problem::default_critic_radius`].
    pub critic_radius: Option<f64>,
    pub actor_radius: Option<f64>,
    pub reward_noise: f64,
}

impl RunSettings {
    pub fn new(algo: Algorithm, steps: u64, seed: u64) -> Self {
        Self {
            algo,
            schedule: StepSchedule::default_for(algo),
            steps,
            seed,
            metrics_every: steps.clamp(1, 1000),
            critic_radius: None,
            actor_radius: None,
            reward_noise: 0.0,
        }
    }
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: u64,
    #[serde(rename = "L_t")]
    pub l_t: f64,
    #[serde(rename = "L_theta")]
    pub l_theta: f64,
    /// `(L_t − L(θ_t))²`.
    pub avg_err_sq: f64,
    /// `‖v_t − v*(θ_t)‖²`.
    pub critic_err_sq: f64,
    /// `‖M(θ_t, v_t)‖²`.
    #[serde(rename = "M_norm_sq")]
    pub m_norm_sq: f64,
    pub v_norm: f64,
    /// Mean `|δ|` since the previous row.
    pub delta_abs_mean: f64,
    pub wall_ns: u64,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 9] =
        ["t", "L_t", "L_theta", "avg_err_sq", "critic_err_sq", "M_norm_sq", "v_norm", "delta_abs_mean", "wall_ns"];

    /// Exact-oracle metrics at the current iterate.
    pub fn measure(problem: &Problem, state: &LearnerState, delta_abs_mean: f64, wall_ns: u64) -> Result<Self> {
        let policy = problem.policy(&state.theta);
        let eval = PolicyEvaluation::new(&problem.mdp, &policy)?;
        let v_star = oracles::critic_fixed_point_from(&eval, &problem.critic)?;
        let m = oracles::actor_field_from(&eval, &problem.mdp, &policy, &state.v, &problem.critic);
        Ok(Self {
            t: state.t,
            l_t: state.avg_reward,
            l_theta: eval.gain,
            avg_err_sq: (state.avg_reward - eval.gain).powi(2),
            critic_err_sq: (&state.v - v_star).norm_squared(),
            m_norm_sq: m.norm_squared(),
            v_norm: state.v.norm(),
            delta_abs_mean,
            wall_ns,
        })
    }

    /// Metric by its column name (`wall_ns` and `t` included).
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "t" => self.t as f64,
            "L_t" => self.l_t,
            "L_theta" => self.l_theta,
            "avg_err_sq" => self.avg_err_sq,
            "critic_err_sq" => self.critic_err_sq,
            "M_norm_sq" => self.m_norm_sq,
            "v_norm" => self.v_norm,
            "delta_abs_mean" => self.delta_abs_mean,
            "wall_ns" => self.wall_ns as f64,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub final_state: LearnerState,
    pub critic_radius: f64,
}

pub fn run(problem: &Problem, settings: &RunSettings) -> Result<RunOutput> {
    run_with(problem, settings, |_| Ok(()))
}

/// Runs `settings.steps` iterations, calling `on_row` for each metrics row
/// (every `metrics_every` steps, first at `t = metrics_every`).
pub fn run_with<F>(problem: &Problem, settings: &RunSettings, mut on_row: F) -> Result<RunOutput>
where
    F: FnMut(&MetricsRow) -> Result<()>,
{
    if settings.metrics_every == 0 {
        return Err(Error::InvalidSpec("metrics_every must be positive".into()));
    }
    if !(0.0..=1.0).contains(&settings.reward_noise) {
        return Err(Error::InvalidSpec("reward_noise must lie in [0, 1]".into()));
    }
    let critic_radius = match settings.critic_radius {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(Error::InvalidSpec(format!("critic radius must be positive, got {r}"))),
        None => problem
            .default_critic_radius()
            .map_err(|e| Error::OracleAt { step: 0, source: Box::new(e) })?,
    };
    let ctx = StepContext {
        mdp: &problem.mdp,
        critic: &problem.critic,
        actor: &problem.actor,
        critic_radius,
        actor_radius: settings.actor_radius,
        reward_noise: settings.reward_noise,
    };
    let mut state =
        LearnerState::initial(problem.mdp.n_states(), problem.critic.dim(), problem.actor.dim(), settings.seed);
    let start = Instant::now();
    let mut rows = Vec::with_capacity((settings.steps / settings.metrics_every) as usize);
    let mut delta_sum = 0.0;
    let mut since = 0u64;
    for _ in 0..settings.steps {
        let info = step(&mut state, &ctx, &settings.schedule, settings.algo);
        delta_sum += info.delta.abs();
        since += 1;
        if state.t.is_multiple_of(settings.metrics_every) {
            let wall_ns = start.elapsed().as_nanos() as u64;
            let row = MetricsRow::measure(problem, &state, delta_sum / since as f64, wall_ns)
                .map_err(|e| Error::OracleAt { step: state.t, source: Box::new(e) })?;
            on_row(&row)?;
            rows.push(row);
            delta_sum = 0.0;
            since = 0;
        }
    }
    Ok(RunOutput { rows, final_state: state, critic_radius })
}

/// Output of [`evaluate_critic`].
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEstimate {
    pub last: DVector<f64>,
    /// Mean of `v_t` over the final `tail` steps.
    pub tail_mean: DVector<f64>,
    pub avg_reward: f64,
}

/// The average-reward and critic recursions alone, with θ frozen: the rates
/// of `algo` under `sched` except `α = 0`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_critic(
    problem: &Problem,
    theta: &DVector<f64>,
    sched: &StepSchedule,
    algo: Algorithm,
    steps: u64,
    tail: u64,
    seed: u64,
    critic_radius: f64,
) -> CriticEstimate {
    let ctx = StepContext {
        mdp: &problem.mdp,
        critic: &problem.critic,
        actor: &problem.actor,
        critic_radius,
        actor_radius: None,
        reward_noise: 0.0,
    };
    let mut state = LearnerState::initial(problem.mdp.n_states(), problem.critic.dim(), problem.actor.dim(), seed);
    state.theta = theta.clone();
    let tail = tail.clamp(1, steps.max(1));
    let mut sum = DVector::zeros(problem.critic.dim());
    for i in 0..steps {
        let rates = Rates { alpha: 0.0, ..sched.rates(algo, state.t) };
        let tr = sample_transition(&mut state, &ctx);
        apply_update(&mut state, &tr, rates, &ctx);
        if i >= steps - tail {
            sum += &state.v;
        }
    }
    CriticEstimate { tail_mean: sum / tail as f64, last: state.v, avg_reward: state.avg_reward }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::features::{make_features, FeatureKind};

    fn problem() -> Problem {
        let mdp = envs::easy4();
        let critic = make_features(FeatureKind::OneHotReduced, &mdp, 0).unwrap();
        Problem::tabular_actor(mdp, critic).unwrap()
    }

    #[test]
    fn zero_steps_is_empty() {
        let out = run(&problem(), &RunSettings::new(Algorithm::CriticActor, 0, 1)).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.final_state.t, 0);
        assert_eq!(out.final_state.theta.amax(), 0.0);
    }

    #[test]
    fn rows_land_on_the_grid() {
        let mut settings = RunSettings::new(Algorithm::CriticActor, 1050, 1);
        settings.metrics_every = 100;
        let out = run(&problem(), &settings).unwrap();
        let ts: Vec<u64> = out.rows.iter().map(|r| r.t).collect();
        assert_eq!(ts, (1..=10).map(|k| k * 100).collect::<Vec<_>>());
        for r in &out.rows {
            assert!(r.avg_err_sq >= 0.0 && r.critic_err_sq >= 0.0 && r.m_norm_sq >= 0.0);
            assert!(r.v_norm <= out.critic_radius + 1e-12);
        }
    }

    #[test]
    fn repeated_runs_agree_except_wall_time() {
        let p = problem();
        let mut settings = RunSettings::new(Algorithm::ActorCritic, 3000, 5);
        settings.metrics_every = 250;
        let strip = |rows: Vec<MetricsRow>| rows.into_iter().map(|r| MetricsRow { wall_ns: 0, ..r }).collect::<Vec<_>>();
        let a = run(&p, &settings).unwrap();
        let b = run(&p, &settings).unwrap();
        assert_eq!(strip(a.rows), strip(b.rows));
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn bad_settings_are_rejected() {
        let mut settings = RunSettings::new(Algorithm::CriticActor, 10, 0);
        settings.metrics_every = 0;
        assert!(run(&problem(), &settings).is_err());
    }
}
