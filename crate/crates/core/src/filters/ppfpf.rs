//! Feedback particle filter for point-process observations.
//!
//! Between events every particle follows the prior dynamics plus a control
//! drift `Ω` solving `𝓔(μ, −H)` for the summed intensity `H = Σ h_c`. At an
//! event on channel `c` the ensemble is transported along the log-homotopy
//! `μ_s ∝ h_cˢ μ`, whose velocity field solves `𝓔(μ_s, log h_c)`.

use serde::{Deserialize, Serialize};

use super::{check_counts, check_noise, noise_row, ParticleEnsemble};
use crate::dynamics::{em_step, HiddenModel, IntensityChannel};
use crate::error::{Error, Result};
use crate::gain::{solve_e_values, GainSolverConfig};
use crate::manifold::{Point, TangentVector};

/// Maximum number of times an s-step may be halved.
const MAX_HALVINGS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyConfig {
    pub n_steps: usize,
    pub gain: GainSolverConfig,
    /// Halve an s-step when some particle would move farther than the gain
    /// kernel's length scale.
    pub adaptive: bool,
}

impl HomotopyConfig {
    pub fn new(n_steps: usize, gain: GainSolverConfig) -> HomotopyConfig {
        HomotopyConfig {
            n_steps,
            gain,
            adaptive: true,
        }
    }
}

/// Predict with the prior dynamics, then correct with the control drift.
///
/// `noise` is a row-major `N × r` block of `N(0, dt)` draws.
pub fn ppfpf_drift_step(
    ens: &ParticleEnsemble,
    model: &HiddenModel,
    channels: &[IntensityChannel],
    dt: f64,
    gain: &GainSolverConfig,
    noise: &[f64],
) -> Result<ParticleEnsemble> {
    ens.require_unweighted("the ppFPF")?;
    let r = model.noise_dim();
    check_noise(noise, ens.len(), r)?;
    let omega = control_drift(ens.positions(), channels, gain)?;
    let mut next = Vec::with_capacity(ens.len());
    for (i, p) in ens.positions().iter().enumerate() {
        let predicted = em_step(model, p, dt, noise_row(noise, r, i)?)?;
        let corrected = match &omega {
            Some(om) => predicted.translated(om[i].components(), dt)?,
            None => predicted,
        };
        next.push(corrected);
    }
    ParticleEnsemble::new(next)
}

/// `Ω` solving `𝓔(μ_N, −H)`; `None` when the right-hand side vanishes.
fn control_drift(
    positions: &[Point],
    channels: &[IntensityChannel],
    gain: &GainSolverConfig,
) -> Result<Option<Vec<TangentVector>>> {
    if positions.len() < 2 || channels.is_empty() {
        return Ok(None);
    }
    let neg_h: Vec<f64> = positions
        .iter()
        .map(|p| -channels.iter().map(|c| c.eval(p)).sum::<f64>())
        .collect();
    Ok(Some(solve_e_values(positions, &neg_h, gain)?.vectors))
}

/// Transport the ensemble from `μ` to `h μ / ∫h μ` along the log-homotopy.
pub fn homotopy_transform(
    ens: &ParticleEnsemble,
    h: &dyn Fn(&Point) -> f64,
    cfg: &HomotopyConfig,
) -> Result<ParticleEnsemble> {
    ens.require_unweighted("the homotopy flow")?;
    if cfg.n_steps == 0 {
        return Err(Error::InvalidInput("homotopy needs at least one step".into()));
    }
    let mut positions = ens.positions().to_vec();
    if positions.len() < 2 {
        log_intensity(&positions, h)?;
        return ParticleEnsemble::new(positions);
    }
    let ds = 1.0 / cfg.n_steps as f64;
    for _ in 0..cfg.n_steps {
        positions = flow_step(positions, h, ds, cfg, 0)?;
    }
    ParticleEnsemble::new(positions)
}

fn log_intensity(positions: &[Point], h: &dyn Fn(&Point) -> f64) -> Result<Vec<f64>> {
    positions
        .iter()
        .map(|p| {
            let v = h(p);
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Domain(format!(
                    "intensity must be positive and finite, got {v} at {:?}",
                    p.coords()
                )))
            }
        })
        .collect()
}

fn flow_step(
    positions: Vec<Point>,
    h: &dyn Fn(&Point) -> f64,
    ds: f64,
    cfg: &HomotopyConfig,
    depth: u32,
) -> Result<Vec<Point>> {
    let values = log_intensity(&positions, h)?;
    let field = solve_e_values(&positions, &values, &cfg.gain)?;
    if cfg.adaptive && depth < MAX_HALVINGS && field.max_norm() * ds > cfg.gain.step_limit() {
        let half = flow_step(positions, h, 0.5 * ds, cfg, depth + 1)?;
        return flow_step(half, h, 0.5 * ds, cfg, depth + 1);
    }
    positions
        .iter()
        .zip(&field.vectors)
        .map(|(p, v)| p.translated(v.components(), ds))
        .collect()
}

/// One full filter step: drift step, then `counts[c]` homotopy transforms
/// for each channel `c`.
#[allow(clippy::too_many_arguments)]
pub fn ppfpf_step(
    ens: &ParticleEnsemble,
    model: &HiddenModel,
    channels: &[IntensityChannel],
    counts: &[u32],
    dt: f64,
    gain: &GainSolverConfig,
    homotopy: &HomotopyConfig,
    noise: &[f64],
) -> Result<ParticleEnsemble> {
    check_counts(counts, channels.len())?;
    let mut next = ppfpf_drift_step(ens, model, channels, dt, gain, noise)?;
    for (ch, &k) in channels.iter().zip(counts) {
        for _ in 0..k {
            next = homotopy_transform(&next, &|p| ch.eval(p), homotopy)?;
        }
    }
    Ok(next)
}
