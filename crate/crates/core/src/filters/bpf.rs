//! Bootstrap particle filter with ESS-triggered systematic resampling.

use rand::Rng;

use super::{check_counts, check_noise, noise_row, ParticleEnsemble};
use crate::dynamics::{em_step, HiddenModel, IntensityChannel};
use crate::error::{Error, Result};
use crate::manifold::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct BpfStep {
    pub ensemble: ParticleEnsemble,
    /// ESS after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
}

/// `1 / Σ wᵢ²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling with offset `u ∈ [0, 1)`: draws the particles
/// selected by the points `(u + k)/N`, `k = 0..N`.
pub fn systematic_resample(positions: &[Point], weights: &[f64], u: f64) -> Vec<Point> {
    let n = positions.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for k in 0..n {
        let target = (u + k as f64) / n as f64;
        while target > cumulative && j + 1 < n {
            j += 1;
            cumulative += weights[j];
        }
        out.push(positions[j].clone());
    }
    out
}

/// Propagate by the prior, reweight by the point-process likelihood
/// `Π_c h_c^{k_c} e^{−h_c dt}`, and resample when `ESS/N < threshold`.
#[allow(clippy::too_many_arguments)]
pub fn bpf_step<R: Rng + ?Sized>(
    ens: &ParticleEnsemble,
    model: &HiddenModel,
    channels: &[IntensityChannel],
    counts: &[u32],
    dt: f64,
    noise: &[f64],
    threshold: f64,
    rng: &mut R,
) -> Result<BpfStep> {
    let weights = ens
        .weights()
        .ok_or_else(|| Error::InvalidInput("the BPF requires a weighted ensemble".into()))?;
    check_counts(counts, channels.len())?;
    let r = model.noise_dim();
    check_noise(noise, ens.len(), r)?;

    let mut positions = Vec::with_capacity(ens.len());
    let mut logw = Vec::with_capacity(ens.len());
    for (i, (p, &w)) in ens.positions().iter().zip(weights).enumerate() {
        let q = em_step(model, p, dt, noise_row(noise, r, i)?)?;
        let mut lw = w.ln();
        for (ch, &k) in channels.iter().zip(counts) {
            let h = ch.eval(&q);
            lw -= h * dt;
            if k > 0 {
                lw += f64::from(k) * h.ln();
            }
        }
        logw.push(lw);
        positions.push(q);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let mut new_w: Vec<f64> = logw.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = new_w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    new_w.iter_mut().for_each(|w| *w /= total);

    let n = positions.len();
    let ess = effective_sample_size(&new_w);
    if ess / (n as f64) < threshold {
        let u: f64 = rng.gen();
        let resampled = systematic_resample(&positions, &new_w, u);
        return Ok(BpfStep {
            ensemble: ParticleEnsemble::uniform_weighted(resampled)?,
            ess,
            resampled: true,
        });
    }
    Ok(BpfStep {
        ensemble: ParticleEnsemble::weighted(positions, new_w)?,
        ess,
        resampled: false,
    })
}
