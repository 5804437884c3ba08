//! Gaussian assumed-density filter on ℝ for a linear (OU) prior.
//!
//! The posterior is projected onto `N(m, P)` after every update. For
//! exponential intensities `c·e^{βx}` the moment equations close exactly:
//! between events
//!
//! ```text
//! ĥ  = c·exp(βm + β²P/2)
//! dm = (a·m − P·β·ĥ) dt
//! dP = (2a·P + σ² − P²·β²·ĥ) dt
//! ```
//!
//! and an event maps `m ↦ m + βP` with `P` unchanged. Other intensities fall
//! back to 20-node Gauss–Hermite quadrature of the same moment equations.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::check_counts;
use crate::dynamics::IntensityChannel;
use crate::error::{Error, Result};
use crate::manifold::Point;

const MIN_VARIANCE: f64 = 1e-8;
const QUADRATURE_NODES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: f64,
    pub var: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, var: f64) -> Result<GaussianBelief> {
        if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidInput(format!("invalid Gaussian belief ({mean}, {var})")));
        }
        Ok(GaussianBelief { mean, var })
    }
}

/// Prior `dX = a·X dt + √σ² dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub a: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
pub enum AdfIntensity {
    Exponential { c: f64, beta: f64 },
    General(IntensityChannel),
}

impl From<&IntensityChannel> for AdfIntensity {
    fn from(ch: &IntensityChannel) -> AdfIntensity {
        match ch.exponential_params() {
            Some((c, beta)) => AdfIntensity::Exponential { c, beta },
            None => AdfIntensity::General(ch.clone()),
        }
    }
}

/// Physicists' Gauss–Hermite nodes and weights (`∫ e^{−x²} f(x) dx`).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Golub–Welsch: eigenvalues of the Jacobi matrix are the nodes.
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn quadrature() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(QUADRATURE_NODES))
}

/// `(E[h], Cov(x, h), Cov((x − m)², h))` under `N(m, P)`.
fn moments(intensity: &AdfIntensity, m: f64, p: f64) -> (f64, f64, f64) {
    match *intensity {
        AdfIntensity::Exponential { c, beta } => {
            let h = c * (beta * m + 0.5 * beta * beta * p).exp();
            (h, p * beta * h, p * p * beta * beta * h)
        }
        AdfIntensity::General(ref ch) => {
            let (nodes, weights) = quadrature();
            let scale = (2.0 * p).sqrt();
            let norm = std::f64::consts::PI.sqrt();
            let (mut eh, mut exh, mut ex2h) = (0.0, 0.0, 0.0);
            for (z, w) in nodes.iter().zip(weights) {
                let dx = scale * z;
                let h = ch.eval(&Point::real(m + dx));
                eh += w * h;
                exh += w * dx * h;
                ex2h += w * dx * dx * h;
            }
            eh /= norm;
            exh /= norm;
            ex2h /= norm;
            (eh, exh, ex2h - p * eh)
        }
    }
}

/// Advance the belief by one step. The flag reports whether the variance
/// had to be clamped at `1e−8`.
pub fn adf_step(
    belief: GaussianBelief,
    model: OuParams,
    channels: &[AdfIntensity],
    counts: &[u32],
    dt: f64,
) -> Result<(GaussianBelief, bool)> {
    check_counts(counts, channels.len())?;
    let (m, p) = (belief.mean, belief.var);
    let mut dm = model.a * m;
    let mut dp = 2.0 * model.a * p + model.sigma2;
    for ch in channels {
        let (_, cov_xh, cov_x2h) = moments(ch, m, p);
        dm -= cov_xh;
        dp -= cov_x2h;
    }
    let mut mean = m + dm * dt;
    let mut var = p + dp * dt;
    let mut clamped = false;
    if !(var > 0.0) {
        var = MIN_VARIANCE;
        clamped = true;
    }
    for (ch, &k) in channels.iter().zip(counts) {
        for _ in 0..k {
            match *ch {
                AdfIntensity::Exponential { beta, .. } => mean += beta * var,
                AdfIntensity::General(_) => {
                    let (eh, cov_xh, cov_x2h) = moments(ch, mean, var);
                    if !(eh > 0.0) {
                        return Err(Error::Domain("intensity vanishes under the belief".into()));
                    }
                    let shift = cov_xh / eh;
                    // E[(x − m')² h]/E[h] with m' = m + shift.
                    var += cov_x2h / eh - shift * shift;
                    mean += shift;
                    if !(var > 0.0) {
                        var = MIN_VARIANCE;
                        clamped = true;
                    }
                }
            }
        }
    }
    if !mean.is_finite() || !var.is_finite() {
        return Err(Error::Domain(format!("ADF diverged to ({mean}, {var})")));
    }
    Ok((GaussianBelief { mean, var }, clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    const OU: OuParams = OuParams { a: -1.0, sigma2: 2.0 };

    #[test]
    fn event_update_examples() {
        let ch = [AdfIntensity::Exponential { c: 2.0, beta: 1.0 }];
        let (b, _) = adf_step(GaussianBelief::new(0.0, 1.0).unwrap(), OuParams { a: 0.0, sigma2: 0.0 }, &ch, &[1], 1e-300).unwrap();
        assert!((b.mean - 1.0).abs() < 1e-12 && (b.var - 1.0).abs() < 1e-12);
        let (b, _) = adf_step(GaussianBelief::new(2.0, 0.5).unwrap(), OuParams { a: 0.0, sigma2: 0.0 }, &ch, &[1], 1e-300).unwrap();
        assert!((b.mean - 2.5).abs() < 1e-12 && (b.var - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_intensity_stationary_point() {
        // dm = −m, dP = −2P + 2 vanish at (0, 1).
        let ch = [AdfIntensity::Exponential { c: 3.0, beta: 0.0 }];
        let (b, clamped) = adf_step(GaussianBelief::new(0.0, 1.0).unwrap(), OU, &ch, &[0], 0.01).unwrap();
        assert_eq!((b.mean, b.var, clamped), (0.0, 1.0, false));
        let mut b = GaussianBelief::new(2.0, 0.3).unwrap();
        for _ in 0..2000 {
            b = adf_step(b, OU, &ch, &[0], 0.01).unwrap().0;
        }
        assert!(b.mean.abs() < 1e-6 && (b.var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn variance_clamped_when_update_overshoots() {
        let ch = [AdfIntensity::Exponential { c: 1.0, beta: 10.0 }];
        let (b, clamped) = adf_step(GaussianBelief::new(1.0, 1.0).unwrap(), OU, &ch, &[0], 0.01).unwrap();
        assert!(clamped);
        assert_eq!(b.var, MIN_VARIANCE);
    }

    #[test]
    fn gauss_hermite_integrates_moments() {
        let (x, w) = gauss_hermite(20);
        let total: f64 = w.iter().sum();
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        // ∫ x⁴ e^{−x²} = 3√π/4
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn quadrature_path_matches_closed_form() {
        let exp = AdfIntensity::Exponential { c: 2.0, beta: 1.0 };
        let general = AdfIntensity::General(IntensityChannel::new(
            "exp",
            Arc::new(|p: &Point| 2.0 * p.x().exp()),
        ));
        let b = GaussianBelief::new(0.3, 0.6).unwrap();
        for counts in [[0u32], [1], [2]] {
            let (a, _) = adf_step(b, OU, &[exp.clone()], &counts, 0.01).unwrap();
            let (g, _) = adf_step(b, OU, &[general.clone()], &counts, 0.01).unwrap();
            assert!((a.mean - g.mean).abs() < 1e-9, "{a:?} vs {g:?}");
            assert!((a.var - g.var).abs() < 1e-9, "{a:?} vs {g:?}");
        }
    }

    #[test]
    fn channel_conversion() {
        let ch = IntensityChannel::exponential("h", 2.0, 1.0);
        assert!(matches!(AdfIntensity::from(&ch), AdfIntensity::Exponential { c, beta } if c == 2.0 && beta == 1.0));
        let ch = IntensityChannel::new("g", Arc::new(|_: &Point| 1.0));
        assert!(matches!(AdfIntensity::from(&ch), AdfIntensity::General(_)));
    }
}
