//! Chart-level geometry for the two supported state spaces.
//!
//! Points on ℝⁿ are stored as plain coordinates. The circle uses the single
//! angle chart `[0, 2π)`; every constructor and every operation returning a
//! [`Point`] re-wraps the angle into that range.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

type Coords = SmallVec<[f64; 2]>;

/// Resultant length below which a circular mean is considered undefined.
pub const MIN_RESULTANT: f64 = 1e-12;

const FRECHET_TOL: f64 = 1e-10;
const FRECHET_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    Euclidean(usize),
    Circle,
}

impl ManifoldKind {
    pub fn dim(&self) -> usize {
        match self {
            ManifoldKind::Euclidean(n) => *n,
            ManifoldKind::Circle => 1,
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, ManifoldKind::Circle)
    }

    fn validate(&self) -> Result<()> {
        match self {
            ManifoldKind::Euclidean(0) => {
                Err(Error::InvalidInput("Euclidean dimension must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A state value in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Coords,
    manifold: ManifoldKind,
}

/// A velocity expressed in the chart of its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    components: Coords,
}

/// Reduce an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid rounds tiny negative inputs up to exactly 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed angular difference `a − b` reduced into `(−π, π]`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Geodesic distance on the unit circle, `π − ||a − b| − π|`.
#[inline]
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    PI - (d - PI).abs()
}

pub fn wrap(coords: &[f64], manifold: ManifoldKind) -> Result<Point> {
    manifold.validate()?;
    if coords.len() != manifold.dim() {
        return Err(Error::DimensionMismatch {
            expected: manifold.dim(),
            got: coords.len(),
        });
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite coordinates {coords:?}"
        )));
    }
    let coords = match manifold {
        ManifoldKind::Euclidean(_) => Coords::from_slice(coords),
        ManifoldKind::Circle => smallvec::smallvec![wrap_angle(coords[0])],
    };
    Ok(Point { coords, manifold })
}

/// Chart-level Euler move `p + v·dt`, re-wrapped on the circle.
pub fn step(p: &Point, v: &TangentVector, dt: f64) -> Result<Point> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
    }
    p.translated(v.components(), dt)
}

pub fn distance(p: &Point, q: &Point) -> Result<f64> {
    if p.manifold != q.manifold {
        return Err(Error::ManifoldMismatch {
            left: p.manifold,
            right: q.manifold,
        });
    }
    Ok(match p.manifold {
        ManifoldKind::Circle => circular_distance(p.coords[0], q.coords[0]),
        ManifoldKind::Euclidean(_) => p
            .coords
            .iter()
            .zip(&q.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
    })
}

/// Weighted barycenter: arithmetic mean on ℝⁿ, Fréchet mean on the circle.
///
/// `weights` must be nonnegative and sum to one; `None` means equal weights.
pub fn barycenter(points: &[Point], weights: Option<&[f64]>) -> Result<Point> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidInput("barycenter of an empty point set".into()))?;
    let manifold = first.manifold;
    if let Some(p) = points.iter().find(|p| p.manifold != manifold) {
        return Err(Error::ManifoldMismatch {
            left: manifold,
            right: p.manifold,
        });
    }
    if let Some(w) = weights {
        validate_weights(w, points.len())?;
    }
    match manifold {
        ManifoldKind::Circle => {
            let angles: Vec<f64> = points.iter().map(|p| p.coords[0]).collect();
            let mean = circular_barycenter(&angles, weights)?;
            Ok(Point::angle(mean))
        }
        ManifoldKind::Euclidean(n) => {
            let mut acc = vec![0.0; n];
            let uniform = 1.0 / points.len() as f64;
            for (i, p) in points.iter().enumerate() {
                let w = weights.map_or(uniform, |w| w[i]);
                for (a, c) in acc.iter_mut().zip(&p.coords) {
                    *a += w * c;
                }
            }
            wrap(&acc, manifold)
        }
    }
}

/// Fréchet mean of angles under squared circular distance.
///
/// Starts from the extrinsic mean direction and refines with the fixed-point
/// iteration `θ ← θ − Σ wᵢ (θ ⊖ θᵢ)`.
pub fn circular_barycenter(angles: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if angles.is_empty() {
        return Err(Error::InvalidInput("barycenter of an empty point set".into()));
    }
    let uniform = 1.0 / angles.len() as f64;
    let w = |i: usize| weights.map_or(uniform, |w| w[i]);
    let (mut c, mut s) = (0.0, 0.0);
    for (i, &a) in angles.iter().enumerate() {
        c += w(i) * a.cos();
        s += w(i) * a.sin();
    }
    let resultant = c.hypot(s);
    if resultant < MIN_RESULTANT {
        return Err(Error::DegenerateMean(resultant));
    }
    let mut theta = wrap_angle(s.atan2(c));
    for _ in 0..FRECHET_MAX_ITER {
        let update: f64 = angles
            .iter()
            .enumerate()
            .map(|(i, &a)| w(i) * angle_diff(theta, a))
            .sum();
        theta = wrap_angle(theta - update);
        if update.abs() < FRECHET_TOL {
            break;
        }
    }
    Ok(theta)
}

/// Weighted mean squared distance from `center`, the spread measure reported
/// alongside barycenters.
pub fn mean_squared_distance(
    points: &[Point],
    weights: Option<&[f64]>,
    center: &Point,
) -> Result<f64> {
    let uniform = 1.0 / points.len().max(1) as f64;
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        let d = distance(p, center)?;
        acc += weights.map_or(uniform, |w| w[i]) * d * d;
    }
    Ok(acc)
}

pub(crate) fn validate_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} points",
            w.len(),
            n
        )));
    }
    if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

impl Point {
    pub fn new(coords: &[f64], manifold: ManifoldKind) -> Result<Point> {
        wrap(coords, manifold)
    }

    /// A point on the real line. Panics on non-finite input.
    pub fn real(x: f64) -> Point {
        assert!(x.is_finite(), "non-finite coordinate {x}");
        Point {
            coords: smallvec::smallvec![x],
            manifold: ManifoldKind::Euclidean(1),
        }
    }

    /// A point on the circle. Panics on non-finite input.
    pub fn angle(theta: f64) -> Point {
        assert!(theta.is_finite(), "non-finite angle {theta}");
        Point {
            coords: smallvec::smallvec![wrap_angle(theta)],
            manifold: ManifoldKind::Circle,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// First chart coordinate; the whole state for 1-D manifolds.
    #[inline]
    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    /// `self + scale·v` in the chart, wrapped.
    pub fn translated(&self, v: &[f64], scale: f64) -> Result<Point> {
        if v.len() != self.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.len(),
                got: v.len(),
            });
        }
        let mut out = self.clone();
        for (c, dv) in out.coords.iter_mut().zip(v) {
            *c += scale * dv;
        }
        if out.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "move produced non-finite coordinates from {:?}",
                self.coords
            )));
        }
        if self.manifold.is_circle() {
            out.coords[0] = wrap_angle(out.coords[0]);
        }
        Ok(out)
    }
}

impl TangentVector {
    pub fn new(components: &[f64]) -> Result<TangentVector> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite tangent components {components:?}"
            )));
        }
        Ok(TangentVector {
            components: Coords::from_slice(components),
        })
    }

    /// 1-D tangent vector. Panics on non-finite input.
    pub fn scalar(v: f64) -> TangentVector {
        assert!(v.is_finite(), "non-finite tangent component {v}");
        TangentVector {
            components: smallvec::smallvec![v],
        }
    }

    pub fn zero(dim: usize) -> TangentVector {
        TangentVector {
            components: smallvec::smallvec![0.0; dim],
        }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}
