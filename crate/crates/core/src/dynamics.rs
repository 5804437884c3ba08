//! Hidden-state SDE, observation intensities, and synthetic data generation.
//!
//! Truth trajectories use Euler–Maruyama (Euler–Heun for state-dependent
//! diffusion, matching the Stratonovich convention). Events are drawn by
//! per-step Bernoulli thinning with probability `min(1, h·dt)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{wrap, ManifoldKind, Point, TangentVector};

/// Vector field on the state space, evaluated pointwise.
pub type VectorField = Arc<dyn Fn(&Point) -> TangentVector + Send + Sync>;

/// Scalar function on the state space.
pub type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Above this per-step event probability the Bernoulli approximation is
/// considered too coarse.
pub const MAX_STEP_PROBABILITY: f64 = 0.5;

#[derive(Clone)]
pub struct HiddenModel {
    pub manifold: ManifoldKind,
    pub drift: VectorField,
    pub diffusion: Vec<VectorField>,
    /// When set, [`em_step`] uses the Euler–Heun scheme for the Stratonovich
    /// form; otherwise plain Euler–Maruyama.
    pub state_dependent_diffusion: bool,
}

impl fmt::Debug for HiddenModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HiddenModel")
            .field("manifold", &self.manifold)
            .field("noise_dim", &self.diffusion.len())
            .field("state_dependent_diffusion", &self.state_dependent_diffusion)
            .finish()
    }
}

impl HiddenModel {
    /// `dX = a·X dt + √σ² dW` on ℝ.
    pub fn ornstein_uhlenbeck(a: f64, sigma2: f64) -> HiddenModel {
        let sigma = sigma2.sqrt();
        HiddenModel {
            manifold: ManifoldKind::Euclidean(1),
            drift: Arc::new(move |p: &Point| TangentVector::scalar(a * p.x())),
            diffusion: vec![Arc::new(move |_: &Point| TangentVector::scalar(sigma))],
            state_dependent_diffusion: false,
        }
    }

    /// `dθ = √σ² dW` on the circle.
    pub fn circle_brownian(sigma2: f64) -> HiddenModel {
        let sigma = sigma2.sqrt();
        HiddenModel {
            manifold: ManifoldKind::Circle,
            drift: Arc::new(|_: &Point| TangentVector::scalar(0.0)),
            diffusion: vec![Arc::new(move |_: &Point| TangentVector::scalar(sigma))],
            state_dependent_diffusion: false,
        }
    }

    /// Model with no drift and no noise on the given manifold.
    pub fn frozen(manifold: ManifoldKind) -> HiddenModel {
        let dim = manifold.dim();
        HiddenModel {
            manifold,
            drift: Arc::new(move |_: &Point| TangentVector::zero(dim)),
            diffusion: Vec::new(),
            state_dependent_diffusion: false,
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.len()
    }

    /// Diffusion coefficient `½ Σⱼ Vⱼ(p)²` of a 1-D model at `p`.
    pub fn diffusion_coefficient(&self, p: &Point) -> f64 {
        0.5 * self
            .diffusion
            .iter()
            .map(|v| {
                let c = v(p);
                c.components().iter().map(|x| x * x).sum::<f64>()
            })
            .sum::<f64>()
    }
}

/// An observation function `h > 0` for one counting process.
#[derive(Clone)]
pub struct IntensityChannel {
    pub label: String,
    h: ScalarField,
    exponential: Option<(f64, f64)>,
}

impl fmt::Debug for IntensityChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntensityChannel")
            .field("label", &self.label)
            .field("exponential", &self.exponential)
            .finish()
    }
}

impl IntensityChannel {
    pub fn new(label: impl Into<String>, h: ScalarField) -> IntensityChannel {
        IntensityChannel {
            label: label.into(),
            h,
            exponential: None,
        }
    }

    /// `h(x) = c·exp(β·x)` on ℝ.
    pub fn exponential(label: impl Into<String>, c: f64, beta: f64) -> IntensityChannel {
        IntensityChannel {
            label: label.into(),
            h: Arc::new(move |p: &Point| c * (beta * p.x()).exp()),
            exponential: Some((c, beta)),
        }
    }

    /// `h(θ) = peak·exp(κ(cos(θ − center) − 1))` on the circle.
    pub fn von_mises_bump(
        label: impl Into<String>,
        peak: f64,
        concentration: f64,
        center: f64,
    ) -> IntensityChannel {
        IntensityChannel::new(
            label,
            Arc::new(move |p: &Point| {
                peak * (concentration * ((p.x() - center).cos() - 1.0)).exp()
            }),
        )
    }

    /// Constant intensity.
    pub fn constant(label: impl Into<String>, rate: f64) -> IntensityChannel {
        IntensityChannel {
            label: label.into(),
            h: Arc::new(move |_: &Point| rate),
            exponential: Some((rate, 0.0)),
        }
    }

    #[inline]
    pub fn eval(&self, p: &Point) -> f64 {
        (self.h)(p)
    }

    /// `(c, β)` when the channel is `c·exp(β·x)`.
    pub fn exponential_params(&self) -> Option<(f64, f64)> {
        self.exponential
    }

    /// The same channel expressed in a chart rotated by `shift`, i.e.
    /// `h'(θ) = h(θ − shift)`.
    pub fn shifted(&self, shift: f64) -> IntensityChannel {
        let h = self.h.clone();
        IntensityChannel::new(
            self.label.clone(),
            Arc::new(move |p: &Point| h(&Point::angle(p.x() - shift))),
        )
    }
}

/// Four von Mises bumps `h_i(θ) = 20·exp(10(cos(θ − iπ/2) − 1))`, `i = 1..4`.
pub fn circle_benchmark_channels() -> Vec<IntensityChannel> {
    (1..=4)
        .map(|i| IntensityChannel::von_mises_bump(format!("h{i}"), 20.0, 10.0, i as f64 * FRAC_PI_2))
        .collect()
}

/// Sum of all channel intensities at `p`.
pub fn total_intensity(channels: &[IntensityChannel], p: &Point) -> f64 {
    channels.iter().map(|c| c.eval(p)).sum()
}

/// Per-step event counts; row `k` covers the interval `(t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStream {
    pub dt: f64,
    pub counts: Vec<Vec<u32>>,
}

impl ObservationStream {
    pub fn steps(&self) -> usize {
        self.counts.len()
    }

    pub fn channels(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total_events(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| u64::from(c)).sum()
    }
}

/// Draw `n` independent `N(0, dt)` increments.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, dt: f64) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// One Euler–Maruyama step; `noise` holds one `N(0, dt)` draw per diffusion
/// field.
pub fn em_step(model: &HiddenModel, p: &Point, dt: f64, noise: &[f64]) -> Result<Point> {
    if noise.len() != model.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.noise_dim(),
            got: noise.len(),
        });
    }
    if p.manifold() != model.manifold {
        return Err(Error::ManifoldMismatch {
            left: model.manifold,
            right: p.manifold(),
        });
    }
    let dim = p.dim();
    let mut delta = vec![0.0; dim];
    let drift = (model.drift)(p);
    check_dim(&drift, dim)?;
    for (d, v) in delta.iter_mut().zip(drift.components()) {
        *d += v * dt;
    }
    let mut stochastic = vec![0.0; dim];
    for (field, &xi) in model.diffusion.iter().zip(noise) {
        let v = field(p);
        check_dim(&v, dim)?;
        for (s, c) in stochastic.iter_mut().zip(v.components()) {
            *s += c * xi;
        }
    }
    if model.state_dependent_diffusion {
        // Euler–Heun: average the diffusion at the start and predicted points.
        let predicted = p.translated(
            &delta
                .iter()
                .zip(&stochastic)
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>(),
            1.0,
        )?;
        let mut corrected = vec![0.0; dim];
        for (field, &xi) in model.diffusion.iter().zip(noise) {
            let v = field(&predicted);
            check_dim(&v, dim)?;
            for (s, c) in corrected.iter_mut().zip(v.components()) {
                *s += c * xi;
            }
        }
        for ((d, s0), s1) in delta.iter_mut().zip(&stochastic).zip(&corrected) {
            *d += 0.5 * (s0 + s1);
        }
    } else {
        for (d, s) in delta.iter_mut().zip(&stochastic) {
            *d += s;
        }
    }
    p.translated(&delta, 1.0)
}

fn check_dim(v: &TangentVector, dim: usize) -> Result<()> {
    if v.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    Ok(())
}

/// Simulate `steps` Euler–Maruyama steps from `x0`; returns `steps + 1` points.
pub fn simulate_truth<R: Rng + ?Sized>(
    model: &HiddenModel,
    x0: &Point,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Point>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.clone());
    let mut x = x0.clone();
    for _ in 0..steps {
        let noise = sample_noise(rng, model.noise_dim(), dt);
        x = em_step(model, &x, dt, &noise)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Bernoulli-thinned event counts; row `k` uses the intensity at `truth[k + 1]`.
pub fn simulate_observations<R: Rng + ?Sized>(
    channels: &[IntensityChannel],
    truth: &[Point],
    dt: f64,
    rng: &mut R,
) -> Result<ObservationStream> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mut warned = false;
    let mut counts = Vec::with_capacity(truth.len().saturating_sub(1));
    for x in truth.iter().skip(1) {
        let mut row = Vec::with_capacity(channels.len());
        for ch in channels {
            let rate = ch.eval(x);
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(Error::Domain(format!(
                    "intensity '{}' evaluated to {rate}",
                    ch.label
                )));
            }
            let prob = rate * dt;
            if prob > MAX_STEP_PROBABILITY && !warned {
                log::warn!(
                    "channel '{}' has h·dt = {prob:.3} > {MAX_STEP_PROBABILITY}; Bernoulli thinning is inaccurate",
                    ch.label
                );
                warned = true;
            }
            let u: f64 = rng.gen();
            row.push(u32::from(u < prob.min(1.0)));
        }
        counts.push(row);
    }
    Ok(ObservationStream { dt, counts })
}

/// Write a truth trajectory and its observation stream as CSV.
///
/// Columns: `step, time, x0.., count_<label>..`. Row `k` holds the state at
/// `t_k` and the events of the interval ending at `t_k` (zero for `k = 0`).
pub fn write_stream_csv<W: Write>(
    out: W,
    truth: &[Point],
    stream: &ObservationStream,
    labels: &[String],
) -> Result<()> {
    if truth.len() != stream.steps() + 1 {
        return Err(Error::LengthMismatch(format!(
            "{} truth points for {} observation steps",
            truth.len(),
            stream.steps()
        )));
    }
    if stream.steps() > 0 && labels.len() != stream.channels() {
        return Err(Error::LengthMismatch(format!(
            "{} labels for {} channels",
            labels.len(),
            stream.channels()
        )));
    }
    let dim = truth.first().map_or(1, Point::dim);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend((0..dim).map(|d| format!("x{d}")));
    header.extend(labels.iter().map(|l| format!("count_{l}")));
    w.write_record(&header)?;
    for (k, x) in truth.iter().enumerate() {
        let mut rec = vec![k.to_string(), format!("{}", k as f64 * stream.dt)];
        rec.extend(x.coords().iter().map(|c| format!("{c:e}")));
        if k == 0 {
            rec.extend(labels.iter().map(|_| "0".to_string()));
        } else {
            rec.extend(stream.counts[k - 1].iter().map(u32::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a stream written by [`write_stream_csv`].
pub fn read_stream_csv<R: Read>(
    input: R,
    manifold: ManifoldKind,
    dt: f64,
) -> Result<(Vec<Point>, ObservationStream)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let dim = manifold.dim();
    let n_counts = header.len().checked_sub(2 + dim).ok_or_else(|| {
        Error::Parse(format!("stream header has {} columns", header.len()))
    })?;
    let mut truth = Vec::new();
    let mut counts = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}, column {}: {e}", row + 2, i)))
        };
        let coords: Vec<f64> = (2..2 + dim).map(parse).collect::<Result<_>>()?;
        truth.push(wrap(&coords, manifold)?);
        if row > 0 {
            let c = (2 + dim..2 + dim + n_counts)
                .map(|i| {
                    rec[i]
                        .parse::<u32>()
                        .map_err(|e| Error::Parse(format!("row {}, column {}: {e}", row + 2, i)))
                })
                .collect::<Result<Vec<u32>>>()?;
            counts.push(c);
        }
    }
    Ok((truth, ObservationStream { dt, counts }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    #[test]
    fn em_step_examples() {
        let ou = HiddenModel::ornstein_uhlenbeck(-1.0, 0.0);
        let p = em_step(&ou, &Point::real(1.0), 0.01, &[0.0]).unwrap();
        assert_abs_diff_eq!(p.x(), 0.99, epsilon = 1e-15);

        let frozen = HiddenModel::frozen(ManifoldKind::Euclidean(1));
        let p = em_step(&frozen, &Point::real(0.7), 0.01, &[]).unwrap();
        assert_eq!(p.x(), 0.7);

        let bm = HiddenModel::circle_brownian(1.0);
        let p = em_step(&bm, &Point::angle(TAU - 0.01), 0.01, &[0.05]).unwrap();
        assert_abs_diff_eq!(p.x(), 0.04, epsilon = 1e-12);
    }

    #[test]
    fn em_step_dimension_mismatch() {
        let ou = HiddenModel::ornstein_uhlenbeck(-1.0, 2.0);
        assert!(matches!(
            em_step(&ou, &Point::real(0.0), 0.01, &[]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(em_step(&ou, &Point::angle(0.0), 0.01, &[0.0]).is_err());
    }

    #[test]
    fn euler_heun_matches_em_for_constant_diffusion() {
        let mut m = HiddenModel::ornstein_uhlenbeck(-1.0, 2.0);
        let a = em_step(&m, &Point::real(0.3), 0.01, &[0.07]).unwrap();
        m.state_dependent_diffusion = true;
        let b = em_step(&m, &Point::real(0.3), 0.01, &[0.07]).unwrap();
        assert_abs_diff_eq!(a.x(), b.x(), epsilon = 1e-15);
    }

    #[test]
    fn euler_heun_uses_midpoint_diffusion() {
        // dX = X ∘ dW: Heun step is x + ½(x + (x + x·ξ))ξ.
        let m = HiddenModel {
            manifold: ManifoldKind::Euclidean(1),
            drift: Arc::new(|_: &Point| TangentVector::scalar(0.0)),
            diffusion: vec![Arc::new(|p: &Point| TangentVector::scalar(p.x()))],
            state_dependent_diffusion: true,
        };
        let xi = 0.1;
        let p = em_step(&m, &Point::real(2.0), 0.01, &[xi]).unwrap();
        assert_abs_diff_eq!(p.x(), 2.0 + 0.5 * (2.0 + 2.2) * xi, epsilon = 1e-15);
    }

    #[test]
    fn simulate_truth_zero_steps_and_determinism() {
        let ou = HiddenModel::ornstein_uhlenbeck(-1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = simulate_truth(&ou, &Point::real(0.5), 0.01, 0, &mut rng).unwrap();
        assert_eq!(t, vec![Point::real(0.5)]);

        let a = simulate_truth(&ou, &Point::real(0.0), 0.01, 500, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = simulate_truth(&ou, &Point::real(0.0), 0.01, 500, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.len(), 501);
        assert!(a.iter().zip(&b).all(|(p, q)| p.x().to_bits() == q.x().to_bits()));
    }

    #[test]
    fn ou_stationary_variance() {
        // dX = −X dt + √2 dW has stationary law N(0, 1).
        let ou = HiddenModel::ornstein_uhlenbeck(-1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let t = simulate_truth(&ou, &Point::real(0.0), 0.01, 100_000, &mut rng).unwrap();
        let tail: Vec<f64> = t[1000..].iter().map(Point::x).collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / tail.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn ou_preserves_stationary_ensemble() {
        let ou = HiddenModel::ornstein_uhlenbeck(-1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut xs: Vec<Point> = (0..10_000)
            .map(|_| Point::real(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        for _ in 0..1000 {
            for x in xs.iter_mut() {
                let n = sample_noise(&mut rng, 1, 0.01);
                *x = em_step(&ou, x, 0.01, &n).unwrap();
            }
        }
        let n = xs.len() as f64;
        let mean = xs.iter().map(Point::x).sum::<f64>() / n;
        let var = xs.iter().map(|p| (p.x() - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn vanishing_intensity_yields_no_events() {
        let ch = [IntensityChannel::constant("tiny", 1e-12)];
        let truth = vec![Point::real(0.0); 10_001];
        let s = simulate_observations(&ch, &truth, 0.01, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s.steps(), 10_000);
        assert_eq!(s.total_events(), 0);
    }

    #[test]
    fn constant_rate_event_count() {
        // Binomial(10⁵, 0.02): mean 2000, sd ≈ √(2000·0.98).
        let ch = [IntensityChannel::constant("two", 2.0)];
        let truth = vec![Point::real(0.0); 100_001];
        let s = simulate_observations(&ch, &truth, 0.01, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let total = s.total_events() as f64;
        assert!((total - 2000.0).abs() < 3.0 * 2000f64.sqrt(), "events {total}");
    }

    #[test]
    fn event_rate_consistency_over_seeds() {
        let ch = [IntensityChannel::constant("two", 2.0)];
        let truth = vec![Point::real(0.0); 20_001];
        let (n, p) = (20_000.0, 0.02);
        let sd = (n * p * (1.0 - p) as f64).sqrt();
        for seed in 0..20 {
            let s = simulate_observations(&ch, &truth, 0.01, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!((s.total_events() as f64 - n * p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn benchmark_channel_peaks() {
        let ch = circle_benchmark_channels();
        assert_eq!(ch.len(), 4);
        assert_abs_diff_eq!(ch[0].eval(&Point::angle(FRAC_PI_2)), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ch[3].eval(&Point::angle(0.0)), 20.0, epsilon = 1e-12);
        assert!(ch[0].eval(&Point::angle(-FRAC_PI_2)) < 1e-7);
    }

    #[test]
    fn observations_are_deterministic() {
        let ou = HiddenModel::ornstein_uhlenbeck(-1.0, 2.0);
        let ch = [IntensityChannel::exponential("h", 2.0, 1.0)];
        let truth = simulate_truth(&ou, &Point::real(0.0), 0.01, 2000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let a = simulate_observations(&ch, &truth, 0.01, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let b = simulate_observations(&ch, &truth, 0.01, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stream_csv_round_trip() {
        let bm = HiddenModel::circle_brownian(1.0);
        let ch = circle_benchmark_channels();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth = simulate_truth(&bm, &Point::angle(1.0), 0.01, 300, &mut rng).unwrap();
        let s = simulate_observations(&ch, &truth, 0.01, &mut rng).unwrap();
        let labels: Vec<String> = ch.iter().map(|c| c.label.clone()).collect();
        let mut buf = Vec::new();
        write_stream_csv(&mut buf, &truth, &s, &labels).unwrap();
        let (t2, s2) = read_stream_csv(buf.as_slice(), ManifoldKind::Circle, 0.01).unwrap();
        assert_eq!(s2, s);
        for (a, b) in truth.iter().zip(&t2) {
            assert_eq!(a.x().to_bits(), b.x().to_bits());
        }
    }
}
