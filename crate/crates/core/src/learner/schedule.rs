use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AssumptionReport, Constants};

/// Which recursion drives the fast timescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Actor and average reward fast (`ν`), critic slow (`σ > ν`).
    #[serde(rename = "ca")]
    CriticActor,
    /// Critic and average reward fast (`σ`), actor slow.
    #[serde(rename = "ac")]
    ActorCritic,
    /// One step size for all three recursions.
    #[serde(rename = "stac")]
    SingleTimescale,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::CriticActor => "ca",
            Self::ActorCritic => "ac",
            Self::SingleTimescale => "stac",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ca" => Ok(Self::CriticActor),
            "ac" => Ok(Self::ActorCritic),
            "stac" => Ok(Self::SingleTimescale),
            other => Err(Error::Parse(format!("unknown algorithm {other:?} (expected ca|ac|stac)"))),
        }
    }
}

/// Step sizes at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// Actor.
    pub alpha: f64,
    /// Critic.
    pub beta: f64,
    /// Average-reward estimate.
    pub gamma: f64,
}

impl Rates {
    pub const ZERO: Rates = Rates { alpha: 0.0, beta: 0.0, gamma: 0.0 };

    pub fn min(&self) -> f64 {
        self.alpha.min(self.beta).min(self.gamma)
    }
}

/// Polynomial schedules `α_t = c_α/(1+t)^ν`, `β_t = c_β/(1+t)^σ`,
/// `γ_t = c_γ/(1+t)^ν`. The coupling `γ_t = K α_t` holds with `K = c_γ/c_α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub nu: f64,
    pub sigma: f64,
}

impl StepSchedule {
    pub fn new(c_alpha: f64, c_beta: f64, c_gamma: f64, nu: f64, sigma: f64) -> Self {
        Self { c_alpha, c_beta, c_gamma, nu, sigma }
    }

    /// `1.5/(1+t)^0.5` actor, `1.5/(1+t)^0.51` critic.
    pub fn critic_actor() -> Self {
        Self::new(1.5, 1.5, 1.5, 0.5, 0.51)
    }

    /// `1.5/(1+t)^0.6` actor, `1.5/(1+t)^0.4` critic.
    pub fn actor_critic() -> Self {
        Self::new(1.5, 1.5, 1.5, 0.6, 0.4)
    }

    /// `1.5/(1+t)^0.6` everywhere.
    pub fn single_timescale() -> Self {
        Self::new(1.5, 1.5, 1.5, 0.6, 0.6)
    }

    pub fn default_for(algo: Algorithm) -> Self {
        match algo {
            Algorithm::CriticActor => Self::critic_actor(),
            Algorithm::ActorCritic => Self::actor_critic(),
            Algorithm::SingleTimescale => Self::single_timescale(),
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.5, 0.51)
    }

    /// `K = c_γ / c_α`.
    pub fn k_coupling(&self) -> f64 {
        self.c_gamma / self.c_alpha
    }

    /// Sets `c_γ = K c_α`.
    pub fn with_coupling(mut self, k: f64) -> Self {
        self.c_gamma = k * self.c_alpha;
        self
    }

    fn positive(&self) -> bool {
        self.c_alpha > 0.0 && self.c_beta > 0.0 && self.c_gamma > 0.0
    }

    /// `0 < ν < σ < 1`, `2σ < 3ν`, `2σ − ν < 1`.
    pub fn finite_time_ok(&self) -> bool {
        let (nu, sigma) = (self.nu, self.sigma);
        self.positive() && 0.0 < nu && nu < sigma && sigma < 1.0 && 2.0 * sigma < 3.0 * nu && 2.0 * sigma - nu < 1.0
    }

    /// `1/2 < ν, σ ≤ 1`.
    pub fn asymptotic_ok(&self) -> bool {
        let (nu, sigma) = (self.nu, self.sigma);
        self.positive() && nu > 0.5 && nu <= 1.0 && sigma > 0.5 && sigma <= 1.0
    }

    pub fn alpha(&self, t: u64) -> f64 {
        self.c_alpha / (1.0 + t as f64).powf(self.nu)
    }

    pub fn beta(&self, t: u64) -> f64 {
        self.c_beta / (1.0 + t as f64).powf(self.sigma)
    }

    pub fn gamma(&self, t: u64) -> f64 {
        self.c_gamma / (1.0 + t as f64).powf(self.nu)
    }

    pub fn rates(&self, algo: Algorithm, t: u64) -> Rates {
        let base = 1.0 + t as f64;
        match algo {
            Algorithm::CriticActor => Rates { alpha: self.alpha(t), beta: self.beta(t), gamma: self.gamma(t) },
            Algorithm::ActorCritic => Rates {
                alpha: self.alpha(t),
                beta: self.beta(t),
                gamma: self.c_gamma / base.powf(self.sigma),
            },
            Algorithm::SingleTimescale => {
                let r = self.alpha(t);
                Rates { alpha: r, beta: r, gamma: r }
            }
        }
    }
}

/// Result of checking a schedule against the step-size conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleValidity {
    /// `0 < ν < σ < 1`, `2σ < 3ν`, `2σ − ν < 1`, all constants positive.
    pub finite_time_ok: bool,
    /// Robbins–Monro: `1/2 < ν, σ ≤ 1`.
    pub asymptotic_ok: bool,
    /// `c_α/c_γ < 1/(2B(G + U_w) + U_w B)`.
    pub ratio_ok: bool,
    pub ratio: f64,
    pub ratio_bound: f64,
}

impl ScheduleValidity {
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.finite_time_ok {
            out.push("schedule violates the finite-time exponent conditions".to_string());
        }
        if !self.asymptotic_ok {
            out.push("schedule is not square summable (asymptotic conditions fail)".to_string());
        }
        if !self.ratio_ok {
            out.push(format!(
                "c_alpha/c_gamma = {:.4} is not below the bound {:.4e}",
                self.ratio, self.ratio_bound
            ));
        }
        out
    }
}

pub fn validate_schedule(sched: &StepSchedule, report: &AssumptionReport) -> ScheduleValidity {
    validate_schedule_with(sched, &report.constants)
}

pub fn validate_schedule_with(sched: &StepSchedule, constants: &Constants) -> ScheduleValidity {
    let ratio = sched.c_alpha / sched.c_gamma;
    ScheduleValidity {
        finite_time_ok: sched.finite_time_ok(),
        asymptotic_ok: sched.asymptotic_ok(),
        ratio_ok: ratio < constants.ratio_bound,
        ratio,
        ratio_bound: constants.ratio_bound,
    }
}
