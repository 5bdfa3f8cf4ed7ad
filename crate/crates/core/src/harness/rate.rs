//! Empirical convergence rates from metrics files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values are floored here before taking logs.
const LOG_FLOOR: f64 = 1e-300;
/// Fewer rows than this in the fit range is an error.
pub const MIN_FIT_ROWS: usize = 10;

/// Trailing window geometric mean: row `i` averages `log y` over the rows
/// with `t ∈ (t_i / 10, t_i]`.
pub fn windowed_geometric_mean(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    assert_eq!(ts.len(), ys.len());
    let logs: Vec<f64> = ys.iter().map(|y| y.max(LOG_FLOOR).ln()).collect();
    let mut prefix = vec![0.0; logs.len() + 1];
    for (i, l) in logs.iter().enumerate() {
        prefix[i + 1] = prefix[i] + l;
    }
    let mut lo = 0;
    (0..ts.len())
        .map(|i| {
            while lo < i && ts[lo] <= ts[i] / 10.0 {
                lo += 1;
            }
            ((prefix[i + 1] - prefix[lo]) / (i + 1 - lo) as f64).exp()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of `log(windowed) ~ log t`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rows: usize,
    /// Windowed value at each power of ten inside the fit range.
    pub decades: Vec<(u64, f64)>,
}

/// Ordinary least squares on `(ln t, ln ȳ_t)` over rows with `t ≥ t_min`
/// (and `t ≤ t_max` when given). Rows must be sorted by `t`.
pub fn fit_rate(points: &[(f64, f64)], t_min: f64, t_max: Option<f64>) -> Result<RateFit> {
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvariantViolation("metric rows must have strictly increasing t".into()));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let windowed = windowed_geometric_mean(&ts, &ys);
    let t_max = t_max.unwrap_or(f64::INFINITY);
    let sel: Vec<(f64, f64)> = ts
        .iter()
        .zip(&windowed)
        .filter(|(&t, _)| t >= t_min && t <= t_max && t > 0.0)
        .map(|(&t, &w)| (t, w))
        .collect();
    if sel.len() < MIN_FIT_ROWS {
        return Err(Error::InsufficientData(format!(
            "{} rows with t in [{t_min}, {t_max}], need at least {MIN_FIT_ROWS}",
            sel.len()
        )));
    }
    let n = sel.len() as f64;
    let xs: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let ls: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ls.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ls.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all rows share one t".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };

    let first = sel[0].0;
    let last = sel[sel.len() - 1].0;
    let mut decades = Vec::new();
    let mut p = 1u64;
    while (p as f64) <= last {
        if p as f64 >= first {
            if let Some(&(_, w)) = sel.iter().rev().find(|(t, _)| *t <= p as f64) {
                decades.push((p, w));
            }
        }
        p = match p.checked_mul(10) {
            Some(next) => next,
            None => break,
        };
    }
    Ok(RateFit { slope, intercept: my - slope * mx, r_squared, rows: sel.len(), decades })
}

/// Averages several runs of the same metric row by row; the `t` grids must agree.
pub fn mean_over_runs(runs: &[Vec<(f64, f64)>]) -> Result<Vec<(f64, f64)>> {
    let first = runs.first().ok_or_else(|| Error::InsufficientData("no metric files".into()))?;
    for r in &runs[1..] {
        if r.len() != first.len() || r.iter().zip(first).any(|(a, b)| a.0 != b.0) {
            return Err(Error::InvariantViolation("metric files have different t grids".into()));
        }
    }
    let k = runs.len() as f64;
    Ok((0..first.len()).map(|i| (first[i].0, runs.iter().map(|r| r[i].1).sum::<f64>() / k)).collect())
}
