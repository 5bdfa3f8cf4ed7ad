//! Independent seeds run in parallel, then aggregated row by row.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics_io::write_metrics_csv;
use crate::error::{Error, Result};
use crate::learner::{run, MetricsRow, Problem, RunOutput, RunSettings};

/// Metrics averaged across seeds (everything except `wall_ns`).
pub const AGGREGATED: [&str; 7] =
    ["L_t", "L_theta", "avg_err_sq", "critic_err_sq", "M_norm_sq", "v_norm", "delta_abs_mean"];

pub struct SeedRun {
    pub seed: u64,
    pub output: Result<RunOutput>,
}

/// Runs seeds `0..n_seeds` on a pool of `jobs` threads. Results come back
/// sorted by seed regardless of scheduling, so the output is deterministic.
pub fn run_sweep(problem: &Problem, settings: &RunSettings, n_seeds: usize, jobs: usize) -> Result<Vec<SeedRun>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let mut runs: Vec<SeedRun> = pool.install(|| {
        (0..n_seeds as u64)
            .into_par_iter()
            .map(|seed| {
                let s = RunSettings { seed, ..settings.clone() };
                SeedRun { seed, output: run(problem, &s) }
            })
            .collect()
    });
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: u64,
    pub n: usize,
    /// Per-metric mean, in [`AGGREGATED`] order.
    pub mean: Vec<f64>,
    /// Per-metric standard error of the mean (0 for a single seed).
    pub se: Vec<f64>,
}

/// Aggregates successful runs; all must report on the same `t` grid.
pub fn aggregate(runs: &[&[MetricsRow]]) -> Result<Vec<AggregateRow>> {
    let first = runs.first().ok_or_else(|| Error::InsufficientData("no successful runs".into()))?;
    if runs.iter().any(|r| r.len() != first.len() || r.iter().zip(first.iter()).any(|(a, b)| a.t != b.t)) {
        return Err(Error::InvariantViolation("runs have different metric grids".into()));
    }
    let n = runs.len();
    Ok((0..first.len())
        .map(|i| {
            let mut mean = Vec::with_capacity(AGGREGATED.len());
            let mut se = Vec::with_capacity(AGGREGATED.len());
            for name in AGGREGATED {
                let xs: Vec<f64> = runs.iter().map(|r| r[i].get(name).expect("known metric")).collect();
                let m = xs.iter().sum::<f64>() / n as f64;
                let s = if n > 1 {
                    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
                mean.push(m);
                se.push(s);
            }
            AggregateRow { t: first[i].t, n, mean, se }
        })
        .collect())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "n".to_string()];
    for name in AGGREGATED {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_se"));
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.t.to_string(), row.n.to_string()];
        for (m, s) in row.mean.iter().zip(&row.se) {
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `dir/seed_<k>.csv` for each successful seed and `dir/aggregate.csv`.
/// Returns the failures as `(seed, error)`.
pub fn write_sweep(dir: &Path, runs: &[SeedRun]) -> Result<Vec<(u64, String)>> {
    std::fs::create_dir_all(dir)?;
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in runs {
        match &r.output {
            Ok(out) => {
                write_metrics_csv(&dir.join(format!("seed_{}.csv", r.seed)), &out.rows)?;
                ok.push(out.rows.as_slice());
            }
            Err(e) => failed.push((r.seed, e.to_string())),
        }
    }
    if !ok.is_empty() {
        write_aggregate_csv(&dir.join("aggregate.csv"), &aggregate(&ok)?)?;
    }
    Ok(failed)
}
