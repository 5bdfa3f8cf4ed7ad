//! The stochastic recursions: step-size schedules, projection, TD error, the
//! critic-actor update and its actor-critic / single-timescale baselines, and
//! the metric-emitting training loop.

mod run;
mod schedule;
mod step;

pub use run::{evaluate_critic, run, run_with, CriticEstimate, MetricsRow, Problem, RunOutput, RunSettings};
pub use schedule::{validate_schedule, validate_schedule_with, Algorithm, Rates, ScheduleValidity, StepSchedule};
pub use step::{
    ac_step, apply_update, ca_step, project, project_in_place, sample_transition, stac_step, step, td_error,
    LearnerState, StepContext, StepInfo, Transition,
};
