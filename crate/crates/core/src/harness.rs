//! Plumbing behind the command-line front end: run configuration, metrics
//! files, seed sweeps, rate fitting, assumption reports and oracle dumps.

pub mod config;
pub mod metrics_io;
pub mod rate;
pub mod solve;
pub mod sweep;
pub mod validate;

pub use config::{FeatureSource, ResolvedRun, RunConfig};
pub use metrics_io::{read_metric_column, sidecar_path, write_metrics_csv, MetricsWriter, Sidecar};
pub use rate::{fit_rate, mean_over_runs, windowed_geometric_mean, RateFit};
pub use solve::{load_theta, solve_dump, OracleDump};
pub use sweep::{aggregate, run_sweep, write_aggregate_csv, write_sweep, AggregateRow, SeedRun, AGGREGATED};
pub use validate::{validate, ValidationOptions, ValidationReport, Verdict};
