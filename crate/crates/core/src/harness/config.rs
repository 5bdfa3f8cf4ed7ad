//! `RunConfig`: the flat key/value (or JSON) document every command reads.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::{self, Environment};
use crate::error::{Error, Result};
use crate::features::{make_features, FeatureKind, FeatureMap};
use crate::learner::{Algorithm, Problem, RunSettings, StepSchedule};
use crate::policy::ActionFeatures;

/// Every key is optional; unset keys take algorithm-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub algo: Option<Algorithm>,
    pub env: Option<String>,
    pub features: Option<String>,
    pub feature_seed: Option<u64>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub nu: Option<f64>,
    pub sigma: Option<f64>,
    pub c_alpha: Option<f64>,
    pub c_beta: Option<f64>,
    pub c_gamma: Option<f64>,
    pub k_coupling: Option<f64>,
    pub uv: Option<f64>,
    pub theta_radius: Option<f64>,
    pub reward_noise: Option<f64>,
    pub metrics_every: Option<u64>,
    pub out: Option<PathBuf>,
    pub seeds: Option<usize>,
    pub jobs: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident, $($f:ident),*) => { $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )* };
}

impl RunConfig {
    /// Parses either a JSON object or `key = value` lines (`#` comments).
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).map_err(|e| Error::Parse(format!("config line {}: {e}", e.line())));
        }
        let mut map = serde_json::Map::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", i + 1)))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            let json = match key.as_str() {
                "algo" | "env" | "features" | "out" => serde_json::Value::String(value.to_string()),
                _ => serde_json::from_str(value)
                    .map_err(|_| Error::Parse(format!("config line {}: bad value {value:?} for {key}", i + 1)))?,
            };
            map.insert(key, json);
        }
        serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(mut self, over: &RunConfig) -> Self {
        merge_fields!(
            self, over, algo, env, features, feature_seed, steps, seed, nu, sigma, c_alpha, c_beta, c_gamma,
            k_coupling, uv, theta_radius, reward_noise, metrics_every, out, seeds, jobs
        );
        self
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algo.unwrap_or(Algorithm::CriticActor)
    }

    /// Defaults for `algo`, then explicit constants, then `K` (which sets `c_γ = K c_α`).
    pub fn schedule(&self) -> StepSchedule {
        let mut s = StepSchedule::default_for(self.algorithm());
        if let Some(v) = self.nu {
            s.nu = v;
        }
        if let Some(v) = self.sigma {
            s.sigma = v;
        }
        if let Some(v) = self.c_alpha {
            s.c_alpha = v;
        }
        if let Some(v) = self.c_beta {
            s.c_beta = v;
        }
        if let Some(v) = self.c_gamma {
            s.c_gamma = v;
        }
        if let Some(k) = self.k_coupling {
            s = s.with_coupling(k);
        }
        s
    }

    pub fn env_name(&self) -> &str {
        self.env.as_deref().unwrap_or("easy4")
    }

    pub fn settings(&self) -> RunSettings {
        let algo = self.algorithm();
        let steps = self.steps.unwrap_or(10_000);
        RunSettings {
            algo,
            schedule: self.schedule(),
            steps,
            seed: self.seed.unwrap_or(0),
            metrics_every: self.metrics_every.unwrap_or_else(|| steps.clamp(1, 1000)),
            critic_radius: self.uv,
            actor_radius: self.theta_radius,
            reward_noise: self.reward_noise.unwrap_or(0.0),
        }
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let env = envs::resolve_environment(self.env_name())?;
        let source = FeatureSource::parse(self.features.as_deref(), &env)?;
        let critic = source.build(&env, self.feature_seed.unwrap_or(0))?;
        let actor = Arc::new(
            env.action_features
                .clone()
                .unwrap_or_else(|| ActionFeatures::tabular(env.mdp.n_states(), env.mdp.n_actions())),
        );
        let problem = Problem::new(env.mdp, critic, actor)?;
        Ok(ResolvedRun { problem, settings: self.settings(), config: self.clone() })
    }

    /// Every default made explicit, for the sidecar file.
    pub fn resolved_document(&self) -> Self {
        let s = self.settings();
        Self {
            algo: Some(s.algo),
            env: Some(self.env_name().to_string()),
            features: Some(self.features.clone().unwrap_or_else(|| "auto".into())),
            feature_seed: Some(self.feature_seed.unwrap_or(0)),
            steps: Some(s.steps),
            seed: Some(s.seed),
            nu: Some(s.schedule.nu),
            sigma: Some(s.schedule.sigma),
            c_alpha: Some(s.schedule.c_alpha),
            c_beta: Some(s.schedule.c_beta),
            c_gamma: Some(s.schedule.c_gamma),
            k_coupling: Some(s.schedule.k_coupling()),
            uv: s.critic_radius,
            theta_radius: s.actor_radius,
            reward_noise: Some(s.reward_noise),
            metrics_every: Some(s.metrics_every),
            out: self.out.clone(),
            seeds: self.seeds,
            jobs: self.jobs,
        }
    }
}

/// Where the critic features come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    Kind(FeatureKind),
    /// `Φ = I`: only meaningful for exercising the validators.
    OneHotFull,
    /// The `features` block of the environment file.
    Environment,
    File(PathBuf),
}

impl FeatureSource {
    /// `None` picks the environment block when present, else `one_hot_reduced`.
    pub fn parse(spec: Option<&str>, env: &Environment) -> Result<Self> {
        match spec {
            None | Some("auto") => Ok(if env.features.is_some() {
                Self::Environment
            } else {
                Self::Kind(FeatureKind::OneHotReduced)
            }),
            Some("env") => Ok(Self::Environment),
            Some("one_hot_full") => Ok(Self::OneHotFull),
            Some(other) => match other.parse::<FeatureKind>() {
                Ok(kind) => Ok(Self::Kind(kind)),
                Err(_) if Path::new(other).exists() => Ok(Self::File(PathBuf::from(other))),
                Err(e) => Err(e),
            },
        }
    }

    pub fn build(&self, env: &Environment, seed: u64) -> Result<FeatureMap> {
        match self {
            Self::Kind(kind) => make_features(*kind, &env.mdp, seed),
            Self::OneHotFull => Ok(FeatureMap::one_hot_full(env.mdp.n_states())),
            Self::Environment => env
                .features
                .clone()
                .ok_or_else(|| Error::Parse("environment file has no features block".into())),
            Self::File(path) => {
                let text = std::fs::read_to_string(path)?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                let rows = value.get("features").cloned().unwrap_or(value);
                let rows: Vec<Vec<f64>> =
                    serde_json::from_value(rows).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                FeatureMap::from_nested(rows)
            }
        }
    }
}

/// A config with its environment and features loaded.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub problem: Problem,
    pub settings: RunSettings,
    pub config: RunConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = RunConfig::parse("algo = ac\nsteps=500 # short\nc_alpha = 0.5\nk-coupling = 2\nenv = easy4\n").unwrap();
        let json = RunConfig::parse(r#"{"algo": "ac", "steps": 500, "c-alpha": 0.5, "k-coupling": 2, "env": "easy4"}"#)
            .unwrap();
        assert_eq!(kv, json);
        let s = kv.schedule();
        assert_eq!((s.nu, s.sigma), (0.6, 0.4));
        assert_eq!(s.c_gamma, 1.0);
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::parse("steps = 10\nseed = 3").unwrap();
        let flags = RunConfig { seed: Some(9), ..Default::default() };
        let merged = file.merged(&flags);
        assert_eq!((merged.steps, merged.seed), (Some(10), Some(9)));
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::parse("stepz = 10").is_err());
        assert!(RunConfig::parse("steps").is_err());
    }

    #[test]
    fn resolves_builtin_with_default_features() {
        let run = RunConfig::default().resolve().unwrap();
        assert_eq!(run.problem.critic.dim(), 3);
        assert_eq!(run.settings.algo, Algorithm::CriticActor);
        assert_eq!(run.settings.schedule, StepSchedule::critic_actor());
    }
}
