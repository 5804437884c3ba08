//! Particle and moment filters for point-process observations.
//!
//! Every filter is a step function `(state, counts of this step) → state`;
//! within a step the order is predict, correct, then event updates.

mod adf;
mod bpf;
mod ekspf;
mod ppfpf;

use std::io::Write;

use crate::error::{Error, Result};
use crate::manifold::{
    barycenter, mean_squared_distance, validate_weights, ManifoldKind, Point,
};

pub use adf::{adf_step, gauss_hermite, AdfIntensity, GaussianBelief, OuParams};
pub use bpf::{bpf_step, effective_sample_size, systematic_resample, BpfStep};
pub use ekspf::{chart_covariance_gain, ekspf_event_update, ekspf_step};
pub use ppfpf::{homotopy_transform, ppfpf_drift_step, ppfpf_step, HomotopyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<Point>,
    weights: Option<Vec<f64>>,
}

impl ParticleEnsemble {
    /// Unweighted ensemble.
    pub fn new(positions: Vec<Point>) -> Result<ParticleEnsemble> {
        check_positions(&positions)?;
        Ok(ParticleEnsemble {
            positions,
            weights: None,
        })
    }

    /// Weighted ensemble; weights must be nonnegative and sum to one.
    pub fn weighted(positions: Vec<Point>, weights: Vec<f64>) -> Result<ParticleEnsemble> {
        check_positions(&positions)?;
        validate_weights(&weights, positions.len())?;
        Ok(ParticleEnsemble {
            positions,
            weights: Some(weights),
        })
    }

    /// Weighted ensemble with uniform weights.
    pub fn uniform_weighted(positions: Vec<Point>) -> Result<ParticleEnsemble> {
        let n = positions.len();
        ParticleEnsemble::weighted(positions, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn manifold(&self) -> ManifoldKind {
        self.positions[0].manifold()
    }

    pub fn into_positions(self) -> Vec<Point> {
        self.positions
    }

    /// Barycenter and mean squared distance to it (weighted when weights are
    /// present).
    pub fn estimate(&self) -> Result<(Point, f64)> {
        let w = self.weights();
        let center = barycenter(&self.positions, w)?;
        let spread = mean_squared_distance(&self.positions, w, &center)?;
        Ok((center, spread))
    }

    pub(crate) fn require_unweighted(&self, what: &str) -> Result<()> {
        if self.weights.is_some() {
            return Err(Error::InvalidInput(format!("{what} requires an unweighted ensemble")));
        }
        Ok(())
    }
}

fn check_positions(positions: &[Point]) -> Result<()> {
    let first = positions
        .first()
        .ok_or_else(|| Error::InvalidInput("ensemble needs at least one particle".into()))?;
    if let Some(p) = positions.iter().find(|p| p.manifold() != first.manifold()) {
        return Err(Error::ManifoldMismatch {
            left: first.manifold(),
            right: p.manifold(),
        });
    }
    Ok(())
}

/// Row `i` of a row-major `N × r` noise block.
pub(crate) fn noise_row(noise: &[f64], n: usize, i: usize) -> Result<&[f64]> {
    if n == 0 {
        return Ok(&[]);
    }
    noise
        .get(i * n..(i + 1) * n)
        .ok_or_else(|| Error::LengthMismatch(format!("noise block too short for particle {i}")))
}

pub(crate) fn check_noise(noise: &[f64], particles: usize, noise_dim: usize) -> Result<()> {
    if noise.len() != particles * noise_dim {
        return Err(Error::LengthMismatch(format!(
            "noise block has {} entries, expected {particles}×{noise_dim}",
            noise.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_counts(counts: &[u32], channels: usize) -> Result<()> {
    if counts.len() != channels {
        return Err(Error::LengthMismatch(format!(
            "{} counts for {channels} channels",
            counts.len()
        )));
    }
    Ok(())
}

/// Write ensemble snapshots as CSV rows `step, particle, x0.., weight`.
pub fn write_snapshots<W: Write>(out: W, snapshots: &[(usize, &ParticleEnsemble)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = snapshots
        .first()
        .map_or(1, |(_, e)| e.positions.first().map_or(1, Point::dim));
    let mut header = vec!["step".to_string(), "particle".to_string()];
    header.extend((0..dim).map(|d| format!("x{d}")));
    header.push("weight".into());
    w.write_record(&header)?;
    for (step, ens) in snapshots {
        let uniform = 1.0 / ens.len() as f64;
        for (i, p) in ens.positions.iter().enumerate() {
            let mut rec = vec![step.to_string(), i.to_string()];
            rec.extend(p.coords().iter().map(|c| format!("{c:e}")));
            let wt = ens.weights().map_or(uniform, |w| w[i]);
            rec.push(format!("{wt:e}"));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
