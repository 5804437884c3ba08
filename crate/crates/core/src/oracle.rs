//! Dense-grid reference filter in one dimension.
//!
//! Between events the density follows an operator-split step: a
//! finite-volume Fokker–Planck update (zero-flux walls on an interval,
//! wrap-around on the circle), multiplication by `exp(−(H − Ĥ) dt)`, and
//! renormalization. Events multiply by `h` and renormalize.
//!
//! Nodes carry trapezoidal control volumes (half cells at interval ends), so
//! the conserved discrete mass is exactly the trapezoidal integral.

use std::f64::consts::TAU;
use std::io::Write;

use crate::dynamics::{HiddenModel, IntensityChannel};
use crate::error::{Error, Result};
use crate::manifold::{circular_barycenter, circular_distance, wrap_angle, ManifoldKind, Point};

/// Explicit scheme stability target: `dt·(2D/Δx² + 2|f|/Δx) ≤ 0.8`, which
/// keeps `D·dt/Δx² ≤ 0.4`.
const STABILITY: f64 = 0.8;
const MAX_SUBSTEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridDomain {
    Interval { lo: f64, hi: f64 },
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
    domain: GridDomain,
}

/// Posterior summary reported by [`grid_moments`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridMoments {
    Linear { mean: f64, variance: f64 },
    Circular { mean_direction: f64, circular_variance: f64 },
}

impl GridDensity {
    /// Density on `[lo, hi]` with `points` nodes, from an unnormalized
    /// function.
    pub fn interval(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> Result<GridDensity> {
        if points < 3 || !(hi > lo) {
            return Err(Error::InvalidInput(format!(
                "interval grid needs lo < hi and at least 3 points, got [{lo}, {hi}] with {points}"
            )));
        }
        let dx = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| lo + dx * i as f64).collect();
        let values = grid.iter().map(|&x| f(x)).collect();
        GridDensity::normalized(grid, values, GridDomain::Interval { lo, hi })
    }

    /// Density on the circle with `points` equally spaced nodes.
    pub fn periodic(points: usize, f: impl Fn(f64) -> f64) -> Result<GridDensity> {
        if points < 3 {
            return Err(Error::InvalidInput("periodic grid needs at least 3 points".into()));
        }
        let dx = TAU / points as f64;
        let grid: Vec<f64> = (0..points).map(|i| dx * i as f64).collect();
        let values = grid.iter().map(|&x| f(x)).collect();
        GridDensity::normalized(grid, values, GridDomain::Periodic)
    }

    /// `N(mean, var)` restricted to `[lo, hi]`.
    pub fn gaussian(lo: f64, hi: f64, points: usize, mean: f64, var: f64) -> Result<GridDensity> {
        GridDensity::interval(lo, hi, points, |x| (-(x - mean).powi(2) / (2.0 * var)).exp())
    }

    fn normalized(grid: Vec<f64>, values: Vec<f64>, domain: GridDomain) -> Result<GridDensity> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("density values must be finite and nonnegative".into()));
        }
        let mut gd = GridDensity { grid, values, domain };
        gd.renormalize()?;
        Ok(gd)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> GridDomain {
        self.domain
    }

    pub fn spacing(&self) -> f64 {
        match self.domain {
            GridDomain::Interval { lo, hi } => (hi - lo) / (self.grid.len() - 1) as f64,
            GridDomain::Periodic => TAU / self.grid.len() as f64,
        }
    }

    /// Quadrature weight of node `i`.
    #[inline]
    fn weight(&self, i: usize) -> f64 {
        let dx = self.spacing();
        match self.domain {
            GridDomain::Interval { .. } if i == 0 || i + 1 == self.grid.len() => 0.5 * dx,
            _ => dx,
        }
    }

    /// Trapezoidal integral of `g(x)·p(x)`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        (0..self.grid.len())
            .map(|i| self.weight(i) * g(self.grid[i]) * self.values[i])
            .sum()
    }

    pub fn mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    fn renormalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::ZeroMass);
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        Ok(())
    }

    fn point(&self, x: f64) -> Point {
        match self.domain {
            GridDomain::Interval { .. } => Point::real(x),
            GridDomain::Periodic => Point::angle(x),
        }
    }

    /// Fréchet mean and mean squared distance on the circle, or mean and
    /// variance on an interval: the same summary the particle filters report.
    pub fn frechet_summary(&self) -> Result<(f64, f64)> {
        match self.domain {
            GridDomain::Interval { .. } => match grid_moments(self) {
                GridMoments::Linear { mean, variance } => Ok((mean, variance)),
                GridMoments::Circular { .. } => unreachable!(),
            },
            GridDomain::Periodic => {
                let w: Vec<f64> = (0..self.grid.len()).map(|i| self.weight(i) * self.values[i]).collect();
                let total: f64 = w.iter().sum();
                let w: Vec<f64> = w.iter().map(|x| x / total).collect();
                // A rotation-invariant density has no Fréchet mean; report
                // the chart origin, where the spread is the same as anywhere.
                let mean = match circular_barycenter(&self.grid, Some(&w)) {
                    Err(Error::DegenerateMean(_)) => 0.0,
                    other => other?,
                };
                let msd = self
                    .grid
                    .iter()
                    .zip(&w)
                    .map(|(&x, w)| w * circular_distance(x, mean).powi(2))
                    .sum();
                Ok((mean, msd))
            }
        }
    }

    /// Write `x,p` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "p"])?;
        for (x, p) in self.grid.iter().zip(&self.values) {
            w.write_record([format!("{x:e}"), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_model(gd: &GridDensity, model: &HiddenModel) -> Result<f64> {
    let expected = match gd.domain {
        GridDomain::Interval { .. } => ManifoldKind::Euclidean(1),
        GridDomain::Periodic => ManifoldKind::Circle,
    };
    if model.manifold != expected {
        return Err(Error::ManifoldMismatch {
            left: expected,
            right: model.manifold,
        });
    }
    let d0 = model.diffusion_coefficient(&gd.point(gd.grid[0]));
    for &x in gd.grid.iter().step_by((gd.grid.len() / 16).max(1)) {
        let d = model.diffusion_coefficient(&gd.point(x));
        if (d - d0).abs() > 1e-12 * d0.max(1.0) {
            return Err(Error::InvalidInput(
                "the grid oracle requires a state-independent diffusion coefficient".into(),
            ));
        }
    }
    Ok(d0)
}

/// One explicit Fokker–Planck step without renormalization.
///
/// Advection uses central fluxes where the cell Péclet number is at most
/// one and upwind fluxes elsewhere, which keeps every update coefficient
/// nonnegative.
pub fn grid_fokker_planck(gd: &GridDensity, model: &HiddenModel, dt: f64) -> Result<GridDensity> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let diff = check_model(gd, model)?;
    let g = gd.grid.len();
    let dx = gd.spacing();
    let periodic = matches!(gd.domain, GridDomain::Periodic);
    let n_faces = if periodic { g } else { g - 1 };
    // Face k sits between nodes k and k+1 (mod G on the circle).
    let velocity: Vec<f64> = (0..n_faces)
        .map(|k| {
            let xf = gd.grid[k] + 0.5 * dx;
            let xf = if periodic { wrap_angle(xf) } else { xf };
            (model.drift)(&gd.point(xf)).components()[0]
        })
        .collect();
    let vmax = velocity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rate = 2.0 * diff / (dx * dx) + 2.0 * vmax / dx;
    let substeps = if rate > 0.0 {
        (dt * rate / STABILITY).ceil() as usize
    } else {
        1
    }
    .max(1);
    if substeps > MAX_SUBSTEPS {
        return Err(Error::Cfl {
            needed: substeps,
            max_substeps: MAX_SUBSTEPS,
        });
    }
    let h = dt / substeps as f64;
    let weights: Vec<f64> = (0..g).map(|i| gd.weight(i)).collect();
    let mut p = gd.values.clone();
    let mut flux = vec![0.0; n_faces];
    for _ in 0..substeps {
        for (k, f) in flux.iter_mut().enumerate() {
            let (l, r) = (p[k], p[(k + 1) % g]);
            let u = velocity[k];
            let central = diff > 0.0 && u.abs() * dx <= 2.0 * diff;
            let adv = if central {
                0.5 * u * (l + r)
            } else if u > 0.0 {
                u * l
            } else {
                u * r
            };
            *f = adv - diff * (r - l) / dx;
        }
        for i in 0..g {
            let out_flux = if i < n_faces { flux[i] } else { 0.0 };
            let in_flux = if i > 0 {
                flux[i - 1]
            } else if periodic {
                flux[g - 1]
            } else {
                0.0
            };
            p[i] -= h * (out_flux - in_flux) / weights[i];
        }
        for v in p.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok(GridDensity {
        grid: gd.grid.clone(),
        values: p,
        domain: gd.domain,
    })
}

/// Fokker–Planck step, compensator factor `exp(−(H − Ĥ) dt)`, renormalize.
pub fn grid_predict_correct(
    gd: &GridDensity,
    model: &HiddenModel,
    channels: &[IntensityChannel],
    dt: f64,
) -> Result<GridDensity> {
    let mut out = grid_fokker_planck(gd, model, dt)?;
    if !channels.is_empty() {
        let total: Vec<f64> = out
            .grid
            .iter()
            .map(|&x| {
                let p = out.point(x);
                channels.iter().map(|c| c.eval(&p)).sum()
            })
            .collect();
        let h_mean: f64 = (0..out.grid.len()).map(|i| out.weight(i) * total[i] * out.values[i]).sum::<f64>()
            / out.mass();
        for (v, hv) in out.values.iter_mut().zip(&total) {
            *v *= (-(hv - h_mean) * dt).exp();
        }
    }
    out.renormalize()?;
    Ok(out)
}

/// Bayes update for one event: multiply by `h` and renormalize.
pub fn grid_event_update(gd: &GridDensity, h: &dyn Fn(&Point) -> f64) -> Result<GridDensity> {
    let mut out = gd.clone();
    for (v, &x) in out.values.iter_mut().zip(&gd.grid) {
        let hv = h(&gd.point(x));
        if !(hv >= 0.0) || !hv.is_finite() {
            return Err(Error::Domain(format!("intensity {hv} at grid point {x}")));
        }
        *v *= hv;
    }
    out.renormalize()?;
    Ok(out)
}

pub fn grid_moments(gd: &GridDensity) -> GridMoments {
    match gd.domain {
        GridDomain::Interval { .. } => {
            let mass = gd.mass();
            let mean = gd.integrate(|x| x) / mass;
            let variance = gd.integrate(|x| (x - mean).powi(2)) / mass;
            GridMoments::Linear { mean, variance }
        }
        GridDomain::Periodic => {
            let mass = gd.mass();
            let c = gd.integrate(f64::cos) / mass;
            let s = gd.integrate(f64::sin) / mass;
            GridMoments::Circular {
                mean_direction: wrap_angle(s.atan2(c)),
                circular_variance: 1.0 - c.hypot(s),
            }
        }
    }
}
