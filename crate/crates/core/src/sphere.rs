//! Unit-sphere geometry: normalization, the generalized stereographic
//! projection from the North Pole `N = (0, …, 0, 1)` and its inverse.
//!
//! For a point `χ ∈ S^D \ {N}` of `R^(D+1)` the projection is
//!
//! ```text
//! P_D(χ) = (χ_1, …, χ_D) / (1 − χ_(D+1))
//! ```
//!
//! and its inverse sends `x ∈ R^D` to
//!
//! ```text
//! P_D⁻¹(x) = (2x_1, …, 2x_D, ‖x‖² − 1) / (‖x‖² + 1)
//! ```
//!
//! Both maps are conformal. [`conformality_check`] and
//! [`inverse_conformality_check`] measure this numerically with a central
//! finite-difference Jacobian: `JᵀJ = λ²I` with `λ = 1/(1 − χ_(D+1))` for
//! the projection and `λ = 2/(‖x‖² + 1)` for the inverse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::OpCounter;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector has no coordinates")]
    Empty,
    #[error("coordinate {index} is not finite")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension {found} is below the minimum {min}")]
    DimensionTooSmall { found: usize, min: usize },
    #[error("zero vector: norm {norm:e} is below the zero threshold")]
    ZeroVector { norm: f64 },
    #[error("vector is a positive multiple of the pole axis")]
    PoleRay,
    #[error("point is not on the unit sphere: norm {norm}")]
    NotOnSphere { norm: f64 },
    #[error("point lies in the pole band: last coordinate {last}")]
    PoleBand { last: f64 },
    #[error("squared norm {norm_sq:e} exceeds working precision")]
    Overflow { norm_sq: f64 },
    #[error("finite-difference stencil crosses the pole band")]
    PoleProximity,
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(&'static str),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

pub const DEFAULT_EPS_UNIT: f64 = 1e-12;
pub const DEFAULT_EPS_POLE: f64 = 1e-12;
pub const DEFAULT_EPS_ZERO: f64 = 1e-300;
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Numerical thresholds shared by the geometry kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Allowed deviation of a sphere point's norm from 1.
    pub eps_unit: f64,
    /// Width of the band `χ_last > 1 − eps_pole` excluded around the pole.
    pub eps_pole: f64,
    /// Norms at or below this count as zero.
    pub eps_zero: f64,
    /// Central finite-difference step.
    pub fd_step: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            eps_unit: DEFAULT_EPS_UNIT,
            eps_pole: DEFAULT_EPS_POLE,
            eps_zero: DEFAULT_EPS_ZERO,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            (self.eps_unit, "eps_unit must be positive and finite"),
            (self.eps_pole, "eps_pole must be positive and finite"),
            (self.eps_zero, "eps_zero must be positive and finite"),
            (self.fd_step, "fd_step must be positive and finite"),
        ];
        for (value, msg) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(GeometryError::InvalidTolerance(msg));
            }
        }
        if self.eps_pole >= 1.0 {
            return Err(GeometryError::InvalidTolerance("eps_pole must be below 1"));
        }
        Ok(())
    }

    #[inline]
    fn pole_limit(&self) -> f64 {
        1.0 - self.eps_pole
    }
}

/// A point of `R^m`, `m ≥ 1`, with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbientVector(Vec<f64>);

impl AmbientVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords)?;
        Ok(Self(coords))
    }

    /// Wraps coordinates already known to be finite and nonempty.
    pub(crate) fn from_trusted(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty() && coords.iter().all(|x| x.is_finite()));
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|x| alpha * x).collect())
    }
}

impl AsRef<[f64]> for AmbientVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for AmbientVector {
    type Error = GeometryError;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

/// A unit vector of `R^(D+1)`, `D ≥ 1`, outside the pole band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    pub fn new(coords: Vec<f64>, tol: &ToleranceConfig) -> Result<Self> {
        check_finite(&coords)?;
        if coords.len() < 2 {
            return Err(GeometryError::DimensionTooSmall {
                found: coords.len(),
                min: 2,
            });
        }
        let n = norm(&coords);
        if (n - 1.0).abs() > tol.eps_unit {
            return Err(GeometryError::NotOnSphere { norm: n });
        }
        let last = coords[coords.len() - 1];
        if last > tol.pole_limit() {
            return Err(GeometryError::PoleBand { last });
        }
        Ok(Self(coords))
    }

    pub(crate) fn from_trusted(coords: Vec<f64>) -> Self {
        debug_assert!(coords.len() >= 2);
        Self(coords)
    }

    pub fn ambient_dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// The coordinate along the pole axis.
    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn into_ambient(self) -> AmbientVector {
        AmbientVector(self.0)
    }
}

impl AsRef<[f64]> for SpherePoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Result of a finite-difference conformality measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalityReport {
    /// `sqrt(mean diag(JᵀJ))`.
    pub scale_factor_observed: f64,
    pub scale_factor_predicted: f64,
    /// `max |(JᵀJ)_ij| / λ²` over `i ≠ j`.
    pub off_diagonal_residual: f64,
    /// `max |(JᵀJ)_ii − λ²| / λ²`.
    pub diagonal_spread: f64,
}

impl ConformalityReport {
    pub fn relative_scale_error(&self) -> f64 {
        (self.scale_factor_observed - self.scale_factor_predicted).abs()
            / self.scale_factor_predicted
    }
}

fn check_finite(coords: &[f64]) -> Result<()> {
    if coords.is_empty() {
        return Err(GeometryError::Empty);
    }
    match coords.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(GeometryError::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm, rescaling when the plain sum of squares under- or
/// overflows.
pub(crate) fn norm(v: &[f64]) -> f64 {
    let s: f64 = v.iter().map(|x| x * x).sum();
    if s.is_finite() && s >= f64::MIN_POSITIVE {
        return s.sqrt();
    }
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let t: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * t.sqrt()
}

/// Counted normalization `v / ‖v‖` onto the unit sphere.
///
/// Tally for `m = dim(v)`: `m` squarings, `m` accumulating additions, one
/// square root and `m` divisions. Vectors whose sum of squares leaves the
/// normal range are rescaled first; that path is tallied as performed.
pub(crate) fn normalize_counted(
    v: &[f64],
    tol: &ToleranceConfig,
    counter: &mut OpCounter,
) -> Result<SpherePoint> {
    let m = v.len();
    if m < 2 {
        return Err(GeometryError::DimensionTooSmall { found: m, min: 2 });
    }
    let mut acc = 0.0;
    for x in v {
        acc += x * x;
    }
    counter.mul(m as u64);
    counter.add(m as u64);

    let len = if acc.is_finite() && acc >= f64::MIN_POSITIVE {
        counter.sqrt(1);
        acc.sqrt()
    } else {
        scaled_norm_counted(v, counter)
    };
    if !len.is_finite() {
        return Err(GeometryError::Overflow { norm_sq: acc });
    }
    if len <= tol.eps_zero {
        return Err(GeometryError::ZeroVector { norm: len });
    }

    let coords: Vec<f64> = v.iter().map(|x| x / len).collect();
    counter.div(m as u64);

    if coords[m - 1] > tol.pole_limit() {
        return Err(GeometryError::PoleRay);
    }
    Ok(SpherePoint::from_trusted(coords))
}

fn scaled_norm_counted(v: &[f64], counter: &mut OpCounter) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let m = v.len() as u64;
    let mut acc = 0.0;
    for x in v {
        let y = x / scale;
        acc += y * y;
    }
    counter.div(m);
    counter.mul(m + 1);
    counter.add(m);
    counter.sqrt(1);
    scale * acc.sqrt()
}

/// Counted projection: one subtraction `1 − χ_last` and `D` divisions.
pub(crate) fn stereo_project_counted(p: &SpherePoint, counter: &mut OpCounter) -> AmbientVector {
    let (head, last) = p.0.split_at(p.0.len() - 1);
    let denom = 1.0 - last[0];
    counter.sub(1);
    let coords: Vec<f64> = head.iter().map(|x| x / denom).collect();
    counter.div(head.len() as u64);
    AmbientVector::from_trusted(coords)
}

/// Counted inverse projection of `x ∈ R^m`.
///
/// Tally: `2m` multiplications (`m` squarings and `m` doublings), `m + 1`
/// additions (`m` for `‖x‖²`, one for `‖x‖² + 1`), one subtraction and
/// `m + 1` divisions.
pub(crate) fn stereo_lift_counted(
    v: &[f64],
    tol: &ToleranceConfig,
    counter: &mut OpCounter,
) -> Result<SpherePoint> {
    let m = v.len();
    if m == 0 {
        return Err(GeometryError::Empty);
    }
    let mut norm_sq = 0.0;
    for x in v {
        norm_sq += x * x;
    }
    counter.mul(m as u64);
    counter.add(m as u64);
    if !norm_sq.is_finite() {
        return Err(GeometryError::Overflow { norm_sq });
    }

    let denom = norm_sq + 1.0;
    counter.add(1);
    let top = norm_sq - 1.0;
    counter.sub(1);

    let mut coords = Vec::with_capacity(m + 1);
    for x in v {
        coords.push((2.0 * x) / denom);
    }
    counter.mul(m as u64);
    coords.push(top / denom);
    counter.div(m as u64 + 1);

    // Beyond ‖x‖² ≈ 2/eps_pole the image rounds into the pole band.
    if coords[m] > tol.pole_limit() {
        return Err(GeometryError::Overflow { norm_sq });
    }
    Ok(SpherePoint::from_trusted(coords))
}

/// Projects `v` radially onto the unit sphere.
pub fn normalize(v: &AmbientVector, tol: &ToleranceConfig) -> Result<SpherePoint> {
    normalize_counted(&v.0, tol, &mut OpCounter::default())
}

/// The generalized stereographic projection `P_D`, `S^D \ {N} → R^D`.
pub fn stereo_project(p: &SpherePoint) -> AmbientVector {
    stereo_project_counted(p, &mut OpCounter::default())
}

/// The inverse projection `P_D⁻¹`, `R^D → S^D \ {N}`.
///
/// Fails with [`GeometryError::Overflow`] when `‖v‖²` is not finite or so
/// large that the image rounds into the pole band.
pub fn stereo_lift(v: &AmbientVector) -> Result<SpherePoint> {
    stereo_lift_counted(&v.0, &ToleranceConfig::default(), &mut OpCounter::default())
}

/// Angle in `[0, π]` between two nonzero vectors.
///
/// Evaluated as `2·atan2(‖û − v̂‖, ‖û + v̂‖)` on the unit directions, which
/// equals `arccos(u·v / (‖u‖‖v‖))` and stays accurate for nearly parallel
/// and nearly opposite vectors.
pub fn angle_between(u: &AmbientVector, v: &AmbientVector) -> Result<f64> {
    angle_between_slices(&u.0, &v.0, DEFAULT_EPS_ZERO)
}

pub(crate) fn angle_between_slices(u: &[f64], v: &[f64], eps_zero: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(GeometryError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if !(nu > eps_zero) {
        return Err(GeometryError::ZeroVector { norm: nu });
    }
    if !(nv > eps_zero) {
        return Err(GeometryError::ZeroVector { norm: nv });
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in u.iter().zip(v) {
        let a = x / nu;
        let b = y / nv;
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    let theta = 2.0 * diff.sqrt().atan2(sum.sqrt());
    Ok(theta.clamp(0.0, std::f64::consts::PI))
}

/// Orthonormal basis of the tangent space of the sphere at `p`.
///
/// Gram-Schmidt over the standard axes with their component along `p`
/// removed, skipping the axis most parallel to `p`. Each vector is
/// orthogonalized twice.
pub fn tangent_basis(p: &SpherePoint) -> Vec<Vec<f64>> {
    let m = p.ambient_dim();
    let skip =
        p.0.iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, x)| {
                if x.abs() > bv {
                    (i, x.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m - 1);
    for axis in (0..m).filter(|&i| i != skip) {
        let mut w = vec![0.0; m];
        w[axis] = 1.0;
        for _ in 0..2 {
            let c = dot(&w, &p.0);
            w.iter_mut().zip(&p.0).for_each(|(wi, pi)| *wi -= c * pi);
            for t in &basis {
                let c = dot(&w, t);
                w.iter_mut().zip(t).for_each(|(wi, ti)| *wi -= c * ti);
            }
        }
        let n = norm(&w);
        w.iter_mut().for_each(|wi| *wi /= n);
        basis.push(w);
    }
    basis
}

fn gram_report(columns: &[Vec<f64>], predicted: f64) -> ConformalityReport {
    let k = columns.len();
    let mut diag = Vec::with_capacity(k);
    for c in columns {
        diag.push(dot(c, c));
    }
    let lambda_sq = diag.iter().sum::<f64>() / k as f64;
    let mut off = 0.0_f64;
    for i in 0..k {
        for j in (i + 1)..k {
            off = off.max(dot(&columns[i], &columns[j]).abs());
        }
    }
    let spread = diag
        .iter()
        .fold(0.0_f64, |m, d| m.max((d - lambda_sq).abs()));
    ConformalityReport {
        scale_factor_observed: lambda_sq.sqrt(),
        scale_factor_predicted: predicted,
        off_diagonal_residual: off / lambda_sq,
        diagonal_spread: spread / lambda_sq,
    }
}

/// Finite-difference check that `P_D` is conformal at `p`, with predicted
/// factor `1/(1 − χ_last)`.
pub fn conformality_check(p: &SpherePoint, tol: &ToleranceConfig) -> Result<ConformalityReport> {
    tol.validate()?;
    let h = tol.fd_step;
    if p.last() + h > tol.pole_limit() {
        return Err(GeometryError::PoleProximity);
    }
    let renorm = |coords: Vec<f64>| -> Result<SpherePoint> {
        let n = norm(&coords);
        let q: Vec<f64> = coords.into_iter().map(|x| x / n).collect();
        if q[q.len() - 1] > tol.pole_limit() {
            return Err(GeometryError::PoleProximity);
        }
        Ok(SpherePoint::from_trusted(q))
    };
    let mut columns = Vec::with_capacity(p.ambient_dim() - 1);
    for t in tangent_basis(p) {
        let plus = renorm(p.0.iter().zip(&t).map(|(x, ti)| x + h * ti).collect())?;
        let minus = renorm(p.0.iter().zip(&t).map(|(x, ti)| x - h * ti).collect())?;
        let fp = stereo_project(&plus);
        let fm = stereo_project(&minus);
        columns.push(
            fp.0.iter()
                .zip(&fm.0)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    Ok(gram_report(&columns, 1.0 / (1.0 - p.last())))
}

/// Finite-difference check that `P_D⁻¹` is conformal at `v`, with predicted
/// factor `2/(‖v‖² + 1)`.
pub fn inverse_conformality_check(
    v: &AmbientVector,
    tol: &ToleranceConfig,
) -> Result<ConformalityReport> {
    tol.validate()?;
    let h = tol.fd_step;
    let norm_sq = v.norm_sq();
    if !norm_sq.is_finite() {
        return Err(GeometryError::Overflow { norm_sq });
    }
    let mut scratch = OpCounter::default();
    let mut columns = Vec::with_capacity(v.dim());
    for i in 0..v.dim() {
        let mut plus = v.0.clone();
        let mut minus = v.0.clone();
        plus[i] += h;
        minus[i] -= h;
        let fp = stereo_lift_counted(&plus, tol, &mut scratch)?;
        let fm = stereo_lift_counted(&minus, tol, &mut scratch)?;
        columns.push(
            fp.0.iter()
                .zip(&fm.0)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    Ok(gram_report(&columns, 2.0 / (norm_sq + 1.0)))
}
