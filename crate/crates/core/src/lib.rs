//! Average-reward reinforcement learning on finite MDPs.
//!
//! The crate implements the two-timescale critic-actor recursion (critic on the
//! slow timescale, actor and average-reward estimate on the fast one) with a
//! linear critic, the actor-critic and single-timescale baselines, and a set of
//! exact linear-algebra oracles used to measure every quantity the learner is
//! supposed to converge to.
//!
//! Module map:
//!
//! * [`mdp`], [`policy`], [`exact`]: finite MDPs, softmax-linear policies and
//!   closed-form solvers for the stationary distribution, gain, differential
//!   values and the policy gradient.
//! * [`features`]: critic feature maps and the negative-definiteness check on
//!   the TD matrix `A`.
//! * [`learner`]: step-size schedules, the projection, TD error, single-step
//!   updates and the training loop.
//! * [`oracles`]: critic fixed point, projected Bellman residual, actor field
//!   and its bias decomposition, mixing estimation, optimal gain.
//! * [`envs`]: built-in benchmarks and the JSON interchange format.
//! * [`harness`]: metrics files, seed sweeps, rate fitting and assumption
//!   reports consumed by the CLI.

pub mod envs;
pub mod error;
pub mod exact;
pub mod features;
mod graph;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod oracles;
pub mod policy;

pub use error::{Error, Result};
pub use exact::PolicyEvaluation;
pub use features::{AssumptionReport, FeatureKind, FeatureMap};
pub use learner::{Algorithm, LearnerState, StepSchedule, Transition};
pub use mdp::{FiniteMdp, PolicyChain};
pub use oracles::MixingProfile;
pub use policy::{ActionFeatures, SoftmaxLinearPolicy};

pub use nalgebra::{DMatrix, DVector};
