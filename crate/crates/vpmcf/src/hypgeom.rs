//! Hyperboloid-model primitives for hyperbolic space H^{n+1}.
//!
//! Points live on the upper sheet `{ <X,X> = -1, X^0 >= 1 }` of the unit
//! hyperboloid in Minkowski space R^{n+2} with signature (-, +, ..., +).
//! Working in this model keeps fundamental forms as plain Minkowski dot
//! products of embedding derivatives, with no conformal factors anywhere.
//!
//! Geodesic spheres about the basepoint have closed-form curvature, area
//! and enclosed volume; [`sphere_oracle`] packages those as the reference
//! values every discrete computation downstream is validated against. The
//! sign convention is fixed so that the outward normal of a geodesic sphere
//! of radius `r` carries principal curvatures `+coth(r)`.

use crate::special;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for membership checks on the hyperboloid sheet.
pub const HPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("not on the upper hyperboloid sheet: <X,X> = {minkowski_sq}, X0 = {time}")]
    NotOnHyperboloid { minkowski_sq: f64, time: f64 },
    #[error("radial coordinate must be positive (got {0})")]
    NonPositiveRadius(f64),
    #[error("direction must be a unit vector (|theta| = {0})")]
    NotUnitDirection(f64),
    #[error("invalid distance input: -<p,q> = {0} < 1")]
    InvalidDistanceInput(f64),
    #[error("ambient sphere dimension must satisfy n >= 2 (got {0})")]
    DimensionTooSmall(usize),
    #[error("optimizer failed to converge within {0} iterations")]
    NonConvergence(usize),
}

/// A vector of Minkowski space R^{n+2}, signature (-, +, ..., +) with
/// index 0 timelike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzVec(pub Vec<f64>);

impl LorentzVec {
    pub fn zeros(dim: usize) -> Self {
        LorentzVec(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Minkowski square norm `<v, v>`.
    pub fn norm_sq(&self) -> f64 {
        minkowski_dot(self, self).expect("equal dims")
    }

    pub fn scaled(&self, s: f64) -> Self {
        LorentzVec(self.0.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        LorentzVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        LorentzVec(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

/// A point on the upper hyperboloid sheet, i.e. a point of H^{n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    vec: LorentzVec,
}

impl HPoint {
    /// Validates `<X,X> = -1` (within [`HPOINT_TOL`], scaled for large
    /// coordinates) and `X^0 >= 1`.
    pub fn new(vec: LorentzVec) -> Result<Self, GeomError> {
        let sq = vec.norm_sq();
        let scale = vec.0.iter().map(|x| x * x).sum::<f64>().max(1.0);
        if (sq + 1.0).abs() > HPOINT_TOL * scale || vec.0[0] < 1.0 - HPOINT_TOL {
            return Err(GeomError::NotOnHyperboloid {
                minkowski_sq: sq,
                time: vec.0[0],
            });
        }
        Ok(HPoint { vec })
    }

    /// Skips validation; for internal construction of points that satisfy
    /// the sheet constraint by algebra.
    pub(crate) fn new_unchecked(vec: LorentzVec) -> Self {
        HPoint { vec }
    }

    pub fn vec(&self) -> &LorentzVec {
        &self.vec
    }

    pub fn dim(&self) -> usize {
        self.vec.dim()
    }
}

/// A tangent vector of H^{n+1} at `base`: Minkowski-orthogonal to the
/// base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    pub base: HPoint,
    pub vec: LorentzVec,
}

impl TangentVec {
    pub fn new(base: HPoint, vec: LorentzVec) -> Result<Self, GeomError> {
        let d = minkowski_dot(base.vec(), &vec)?;
        let scale = vec.0.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        if d.abs() > 1e-10 * scale {
            return Err(GeomError::NotOnHyperboloid {
                minkowski_sq: d,
                time: base.vec().0[0],
            });
        }
        Ok(TangentVec { base, vec })
    }
}

/// `<u, v> = -u0 v0 + sum_i ui vi`.
pub fn minkowski_dot(u: &LorentzVec, v: &LorentzVec) -> Result<f64, GeomError> {
    if u.dim() != v.dim() {
        return Err(GeomError::DimensionMismatch(u.dim(), v.dim()));
    }
    let mut acc = -u.0[0] * v.0[0];
    for i in 1..u.dim() {
        acc += u.0[i] * v.0[i];
    }
    Ok(acc)
}

/// The basepoint (1, 0, ..., 0) of H^{n+1} in R^{dim} (dim = n + 2).
pub fn basepoint(dim: usize) -> HPoint {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    HPoint::new_unchecked(LorentzVec(v))
}

/// Geodesic distance `arccosh(-<p, q>)`. Inputs whose pairing falls below 1
/// beyond tolerance are rejected as invalid.
///
/// Evaluated through the chordal identity `<p-q, p-q> = 4 sinh^2(d/2)`,
/// which is exact at coincident points where the direct arccosh form loses
/// half the significant digits.
pub fn hyp_dist(p: &HPoint, q: &HPoint) -> Result<f64, GeomError> {
    let c = -minkowski_dot(p.vec(), q.vec())?;
    if c < 1.0 - 1e-9 {
        return Err(GeomError::InvalidDistanceInput(c));
    }
    let diff = p.vec().sub(q.vec());
    let sq = minkowski_dot(&diff, &diff)?.max(0.0);
    Ok(2.0 * (0.5 * sq.sqrt()).asinh())
}

/// Geodesic polar coordinates about the basepoint:
/// `(rho, theta) -> (cosh rho, sinh rho * theta)` with `theta` a unit vector
/// of R^{n+1}.
pub fn polar_to_hyperboloid(rho: f64, theta: &[f64]) -> Result<HPoint, GeomError> {
    if !(rho > 0.0) {
        return Err(GeomError::NonPositiveRadius(rho));
    }
    let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(GeomError::NotUnitDirection(norm));
    }
    let mut v = Vec::with_capacity(theta.len() + 1);
    v.push(rho.cosh());
    let s = rho.sinh();
    for t in theta {
        v.push(s * t);
    }
    Ok(HPoint::new_unchecked(LorentzVec(v)))
}

/// Exponential map: `exp_p(w) = cosh|w| p + sinh|w| w/|w|` for tangent `w`.
pub fn exp_map(p: &HPoint, w: &LorentzVec) -> Result<HPoint, GeomError> {
    let norm_sq = minkowski_dot(w, w)?;
    let norm = norm_sq.max(0.0).sqrt();
    if norm < 1e-300 {
        return Ok(p.clone());
    }
    let v = p
        .vec()
        .scaled(norm.cosh())
        .add(&w.scaled(norm.sinh() / norm));
    Ok(HPoint::new_unchecked(v))
}

/// Logarithm map: the tangent vector at `p` of length `hyp_dist(p, q)`
/// pointing toward `q`.
pub fn log_map(p: &HPoint, q: &HPoint) -> Result<LorentzVec, GeomError> {
    let c = (-minkowski_dot(p.vec(), q.vec())?).max(1.0);
    let d = c.acosh();
    if d < 1e-14 {
        return Ok(LorentzVec::zeros(p.dim()));
    }
    // u = (q - cosh(d) p) / sinh(d), so q = cosh(d) p + sinh(d) u.
    let u = q.vec().sub(&p.vec().scaled(c)).scaled(1.0 / d.sinh());
    Ok(u.scaled(d))
}

/// Closed-form data of the geodesic sphere of radius `r` in H^{n+1}:
/// the umbilical static states of the volume-preserving flow and the
/// oracle for every discrete curvature and quadrature computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereOracle {
    pub radius: f64,
    pub n: usize,
    /// `coth(r)`, common value of all principal curvatures (> 1: strictly h-convex).
    pub principal_curvature: f64,
    /// `n coth(r)` (> n: h-mean convex).
    pub mean_curvature: f64,
    /// `omega_n sinh^n(r)`.
    pub area: f64,
    /// `omega_n int_0^r sinh^n(s) ds`.
    pub enclosed_volume: f64,
}

impl SphereOracle {
    /// `|A|^2 = n coth^2(r)`.
    pub fn a_squared(&self) -> f64 {
        self.n as f64 * self.principal_curvature * self.principal_curvature
    }
}

/// Builds the sphere oracle. The enclosed volume integral is evaluated by
/// the adaptive scheme to 1e-12 relative accuracy, well beyond any
/// discretization it is used to validate.
pub fn sphere_oracle(r: f64, n: usize) -> Result<SphereOracle, GeomError> {
    if !(r > 0.0) {
        return Err(GeomError::NonPositiveRadius(r));
    }
    if n < 2 {
        return Err(GeomError::DimensionTooSmall(n));
    }
    let omega = special::unit_sphere_area(n);
    let volume = omega * special::integrate_adaptive(&|s: f64| s.sinh().powi(n as i32), 0.0, r, 1e-12);
    Ok(SphereOracle {
        radius: r,
        n,
        principal_curvature: 1.0 / r.tanh(),
        mean_curvature: n as f64 / r.tanh(),
        area: omega * r.sinh().powi(n as i32),
        enclosed_volume: volume,
    })
}

/// `int_0^rho sinh^n(s) ds` in closed form via the reduction
/// `n Phi_n = sinh^{n-1} cosh - (n-1) Phi_{n-2}`.
pub fn sinh_power_integral(n: usize, rho: f64) -> f64 {
    match n {
        0 => rho,
        1 => rho.cosh() - 1.0,
        _ => {
            let sh = rho.sinh();
            let ch = rho.cosh();
            (sh.powi(n as i32 - 1) * ch - (n as f64 - 1.0) * sinh_power_integral(n - 2, rho))
                / n as f64
        }
    }
}
