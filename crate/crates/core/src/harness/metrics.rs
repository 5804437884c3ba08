//! Per-filter summary metrics and the versioned `metrics.csv` schema.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{circular_distance, ManifoldKind};

/// Bumped whenever a column is added, removed, renamed or reordered.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

pub const METRICS_COLUMNS: [&str; 12] = [
    "schema_version",
    "run",
    "seed",
    "filter",
    "status",
    "mse",
    "mean_variance",
    "oracle_mean_error",
    "oracle_var_error",
    "wall_seconds",
    "events",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Time-averaged error summaries of one estimate series.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricFields {
    /// Mean squared (chart or circular) distance between estimate and truth.
    pub mse: f64,
    /// Mean reported posterior variance.
    pub mean_variance: f64,
    /// Mean `|estimate − oracle mean|` (circular distance on S¹).
    pub oracle_mean_error: Option<f64>,
    /// Mean `|variance − oracle variance|`.
    pub oracle_var_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: usize,
    pub seed: u64,
    pub filter: String,
    pub status: RunStatus,
    /// Absent when the filter failed.
    pub metrics: Option<MetricFields>,
    pub wall_seconds: f64,
    pub events: u64,
    pub error: Option<String>,
}

fn point_error(a: f64, b: f64, manifold: ManifoldKind) -> f64 {
    match manifold {
        ManifoldKind::Circle => circular_distance(a, b),
        ManifoldKind::Euclidean(_) => (a - b).abs(),
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Time averages over equal-length series of truth, estimates and reported
/// variances, with optional oracle `(means, variances)`.
pub fn compute_metrics(
    truth: &[f64],
    estimates: &[f64],
    variances: &[f64],
    oracle: Option<(&[f64], &[f64])>,
    manifold: ManifoldKind,
) -> Result<MetricFields> {
    let n = truth.len();
    if n == 0 {
        return Err(Error::InvalidInput("metrics need at least one time point".into()));
    }
    if estimates.len() != n || variances.len() != n {
        return Err(Error::LengthMismatch(format!(
            "truth has {n} points, estimates {}, variances {}",
            estimates.len(),
            variances.len()
        )));
    }
    if let Some((om, ov)) = oracle {
        if om.len() != n || ov.len() != n {
            return Err(Error::LengthMismatch(format!(
                "truth has {n} points, oracle means {}, oracle variances {}",
                om.len(),
                ov.len()
            )));
        }
    }
    let mse = mean(
        truth.iter().zip(estimates).map(|(t, e)| point_error(*t, *e, manifold).powi(2)),
        n,
    );
    let mean_variance = mean(variances.iter().copied(), n);
    let (oracle_mean_error, oracle_var_error) = match oracle {
        Some((om, ov)) => (
            Some(mean(estimates.iter().zip(om).map(|(e, o)| point_error(*e, *o, manifold)), n)),
            Some(mean(variances.iter().zip(ov).map(|(v, o)| (v - o).abs()), n)),
        ),
        None => (None, None),
    };
    Ok(MetricFields {
        mse,
        mean_variance,
        oracle_mean_error,
        oracle_var_error,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Write rows in the fixed column order of [`METRICS_COLUMNS`].
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    for row in rows {
        let m = row.metrics;
        w.write_record([
            METRICS_SCHEMA_VERSION.to_string(),
            row.run.to_string(),
            row.seed.to_string(),
            row.filter.clone(),
            match row.status {
                RunStatus::Ok => "ok".to_string(),
                RunStatus::Failed => "failed".to_string(),
            },
            opt(m.map(|m| m.mse)),
            opt(m.map(|m| m.mean_variance)),
            opt(m.and_then(|m| m.oracle_mean_error)),
            opt(m.and_then(|m| m.oracle_var_error)),
            format!("{:.6}", row.wall_seconds),
            row.events.to_string(),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
