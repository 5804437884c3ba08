//! Constant-gain particle filter (EKSPF baseline).
//!
//! `dS = prior + Σ_c K_c (dN_c − ĥ_c dt)` with the common gain
//! `K_c = Cov(x, h_c) / ĥ_c`. Every particle receives the same correction, so
//! event updates are pure translations of the ensemble. On the circle the
//! covariance is computed naively in the `[0, 2π)` chart.

use super::{check_counts, check_noise, noise_row, ParticleEnsemble};
use crate::dynamics::{em_step, HiddenModel, IntensityChannel};
use crate::error::Result;
use crate::manifold::Point;

/// Chart-coordinate `(Cov(x, h), ĥ)` over the ensemble.
pub fn chart_covariance_gain(positions: &[Point], channel: &IntensityChannel) -> (Vec<f64>, f64) {
    let n = positions.len() as f64;
    let dim = positions[0].dim();
    let h: Vec<f64> = positions.iter().map(|p| channel.eval(p)).collect();
    let h_mean = h.iter().sum::<f64>() / n;
    let mut mean = vec![0.0; dim];
    for p in positions {
        for (m, c) in mean.iter_mut().zip(p.coords()) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; dim];
    for (p, hv) in positions.iter().zip(&h) {
        for ((acc, c), m) in cov.iter_mut().zip(p.coords()).zip(&mean) {
            *acc += (c - m) * (hv - h_mean);
        }
    }
    cov.iter_mut().for_each(|c| *c /= n);
    (cov, h_mean)
}

/// Translate every particle by `K = Cov(x, h)/ĥ`.
pub fn ekspf_event_update(ens: &ParticleEnsemble, channel: &IntensityChannel) -> Result<ParticleEnsemble> {
    ens.require_unweighted("the EKSPF")?;
    let (cov, h_mean) = chart_covariance_gain(ens.positions(), channel);
    let k: Vec<f64> = cov.iter().map(|c| c / h_mean).collect();
    let moved = ens
        .positions()
        .iter()
        .map(|p| p.translated(&k, 1.0))
        .collect::<Result<Vec<_>>>()?;
    ParticleEnsemble::new(moved)
}

pub fn ekspf_step(
    ens: &ParticleEnsemble,
    model: &HiddenModel,
    channels: &[IntensityChannel],
    counts: &[u32],
    dt: f64,
    noise: &[f64],
) -> Result<ParticleEnsemble> {
    ens.require_unweighted("the EKSPF")?;
    check_counts(counts, channels.len())?;
    let r = model.noise_dim();
    check_noise(noise, ens.len(), r)?;

    // Compensator drift −Σ_c K_c ĥ_c dt = −Σ_c Cov(x, h_c) dt, from the
    // pre-step ensemble.
    let dim = ens.positions()[0].dim();
    let mut drift = vec![0.0; dim];
    for ch in channels {
        let (cov, _) = chart_covariance_gain(ens.positions(), ch);
        for (d, c) in drift.iter_mut().zip(&cov) {
            *d -= c;
        }
    }
    let mut next = Vec::with_capacity(ens.len());
    for (i, p) in ens.positions().iter().enumerate() {
        let q = em_step(model, p, dt, noise_row(noise, r, i)?)?;
        next.push(q.translated(&drift, dt)?);
    }
    let mut next = ParticleEnsemble::new(next)?;
    for (ch, &k) in channels.iter().zip(counts) {
        for _ in 0..k {
            next = ekspf_event_update(&next, ch)?;
        }
    }
    Ok(next)
}
