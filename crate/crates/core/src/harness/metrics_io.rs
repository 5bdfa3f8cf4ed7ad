//! Metrics CSV files and their JSON sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::learner::{LearnerState, MetricsRow};

/// Streams rows to a CSV file, flushing after each one so partial runs stay readable.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(MetricsRow::HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.write_record([
            row.t.to_string(),
            row.l_t.to_string(),
            row.l_theta.to_string(),
            row.avg_err_sq.to_string(),
            row.critic_err_sq.to_string(),
            row.m_norm_sq.to_string(),
            row.v_norm.to_string(),
            row.delta_abs_mean.to_string(),
            row.wall_ns.to_string(),
        ])?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for row in rows {
        w.write(row)?;
    }
    w.finish()?;
    Ok(())
}

/// `run.csv` → `run.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Resolved configuration and final learner state of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: RunConfig,
    pub critic_radius: f64,
    pub steps_completed: u64,
    pub final_avg_reward: f64,
    pub final_v: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub final_state: usize,
}

impl Sidecar {
    pub fn new(config: &RunConfig, critic_radius: f64, state: &LearnerState) -> Self {
        Self {
            config: config.resolved_document(),
            critic_radius,
            steps_completed: state.t,
            final_avg_reward: state.avg_reward,
            final_v: state.v.iter().copied().collect(),
            final_theta: state.theta.iter().copied().collect(),
            final_state: state.s,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Reads `(t, value)` pairs for `metric`, falling back to `<metric>_mean`
/// so aggregate files work too.
pub fn read_metric_column(path: &Path, metric: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let t_col = find("t").ok_or_else(|| Error::Parse(format!("{}: no `t` column", path.display())))?;
    let m_col = find(metric).or_else(|| find(&format!("{metric}_mean"))).ok_or_else(|| {
        Error::Parse(format!("{}: no `{metric}` or `{metric}_mean` column", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| -> Result<f64> {
            record
                .get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("{}: line {}: bad number", path.display(), i + 2)))
        };
        out.push((field(t_col)?, field(m_col)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: u64) -> MetricsRow {
        MetricsRow {
            t,
            l_t: 0.5,
            l_theta: 0.25,
            avg_err_sq: 0.0625,
            critic_err_sq: 1e-3,
            m_norm_sq: 0.1,
            v_norm: 2.0,
            delta_abs_mean: 0.3,
            wall_ns: 1234,
        }
    }

    #[test]
    fn header_and_rows() {
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        w.write(&row(10)).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(
            text,
            "t,L_t,L_theta,avg_err_sq,critic_err_sq,M_norm_sq,v_norm,delta_abs_mean,wall_ns\n\
             10,0.5,0.25,0.0625,0.001,0.1,2,0.3,1234\n"
        );
    }

    #[test]
    fn column_round_trip_and_mean_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&p, &[row(10), row(20)]).unwrap();
        assert_eq!(read_metric_column(&p, "M_norm_sq").unwrap(), vec![(10.0, 0.1), (20.0, 0.1)]);
        assert!(read_metric_column(&p, "nope").is_err());
        let q = dir.path().join("agg.csv");
        std::fs::write(&q, "t,n,M_norm_sq_mean,M_norm_sq_se\n5,2,0.5,0.1\n").unwrap();
        assert_eq!(read_metric_column(&q, "M_norm_sq").unwrap(), vec![(5.0, 0.5)]);
        assert_eq!(sidecar_path(&p), dir.path().join("m.json"));
    }
}
