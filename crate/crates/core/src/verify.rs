//! Seeded property suites over the sphere maps and circle images, shared by
//! the `verify` subcommand and the test harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::distortion::{circle_image_check, sample_sphere_circle, FitParams, ImageKind};
use crate::sphere::{
    conformality_check, inverse_conformality_check, stereo_lift, stereo_project, AmbientVector,
    SpherePoint, ToleranceConfig,
};

/// Sphere samples stay at or below this last coordinate.
pub const MAX_SAMPLE_LAST: f64 = 0.9;
/// Default half-width of the cube ambient roundtrip samples are drawn from.
///
/// `P(P⁻¹(v))` loses about `ε‖v‖²/4` relative accuracy because `1 − χ_last`
/// cancels, so wide cubes need the looser [`ROUNDTRIP_PROJECT_LIFT_TOL`].
pub const DEFAULT_AMBIENT_RANGE: f64 = 1.0;
/// Widest cube the relative roundtrip tolerance is stated for.
pub const WIDE_AMBIENT_RANGE: f64 = 1e3;
pub const CIRCLE_SAMPLES: usize = 64;

pub const ROUNDTRIP_PROJECT_LIFT_TOL: f64 = 1e-9;
pub const ROUNDTRIP_LIFT_PROJECT_TOL: f64 = 1e-10;
pub const UNIT_NORM_TOL: f64 = 1e-12;
pub const CONFORMAL_OFF_DIAGONAL_TOL: f64 = 1e-5;
pub const CONFORMAL_SCALE_TOL: f64 = 1e-4;
pub const CIRCLE_FIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Roundtrip,
    Conformal,
    Circles,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Roundtrip => "roundtrip",
            Suite::Conformal => "conformal",
            Suite::Circles => "circles",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "roundtrip" => Ok(Suite::Roundtrip),
            "conformal" => Ok(Suite::Conformal),
            "circles" => Ok(Suite::Circles),
            other => Err(VerifyError::UnknownSuite(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("dimension list must be nonempty with every entry >= 1")]
    InvalidDims,
    #[error("sample count must be at least 1")]
    InvalidSamples,
    #[error("sample range must be positive and finite, got {0}")]
    InvalidRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub dim: Option<usize>,
    pub samples: usize,
    /// Samples whose evaluation raised an error; any failure fails the check.
    pub failures: usize,
    pub max_residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, dim: Option<usize>, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            dim,
            samples: 0,
            failures: 0,
            max_residual: 0.0,
            threshold,
            passed: false,
        }
    }

    fn record(&mut self, residual: Option<f64>) {
        self.samples += 1;
        match residual {
            Some(r) if r.is_finite() => self.max_residual = self.max_residual.max(r),
            _ => self.failures += 1,
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.failures == 0 && self.samples > 0 && self.max_residual < self.threshold;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_residual)
            .fold(0.0, f64::max)
    }
}

/// Independent stream per `(seed, dim)`.
pub fn dim_rng(seed: u64, dim: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (dim as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Uniform point of `S^{ambient_dim-1}` with last coordinate at most
/// `max_last`, by normalizing Gaussian vectors and rejecting.
pub fn random_sphere_point(rng: &mut impl Rng, ambient_dim: usize, max_last: f64) -> SpherePoint {
    let tol = ToleranceConfig::default();
    loop {
        let g: Vec<f64> = (0..ambient_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let len = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(len > 1e-8) {
            continue;
        }
        let p: Vec<f64> = g.iter().map(|x| x / len).collect();
        if p[ambient_dim - 1] <= max_last {
            if let Ok(sp) = SpherePoint::new(p, &tol) {
                return sp;
            }
        }
    }
}

pub fn random_ambient(rng: &mut impl Rng, dim: usize, range: f64) -> AmbientVector {
    let coords = (0..dim).map(|_| rng.random_range(-range..=range)).collect();
    AmbientVector::new(coords).expect("finite uniform sample")
}

fn validate(dims: &[usize], samples: usize) -> Result<(), VerifyError> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(VerifyError::InvalidDims);
    }
    if samples == 0 {
        return Err(VerifyError::InvalidSamples);
    }
    Ok(())
}

fn max_relative(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| {
            if *w == 0.0 {
                g.abs()
            } else {
                ((g - w) / w).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn max_abs(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max)
}

/// For each `D` in `dims`: `P(P⁻¹(v)) = v` per coordinate (relative) for
/// `v` uniform on `[-range, range]^D`, `P⁻¹(P(p)) = p`, and `‖P⁻¹(v)‖ = 1`.
pub fn roundtrip_suite(
    dims: &[usize],
    samples: usize,
    seed: u64,
    range: f64,
) -> Result<SuiteReport, VerifyError> {
    validate(dims, samples)?;
    if !(range > 0.0 && range.is_finite()) {
        return Err(VerifyError::InvalidRange(range));
    }
    let mut checks = Vec::new();
    for &d in dims {
        let mut rng = dim_rng(seed, d);
        let mut pl = CheckResult::new("project_after_lift", Some(d), ROUNDTRIP_PROJECT_LIFT_TOL);
        let mut unit = CheckResult::new("lift_unit_norm", Some(d), UNIT_NORM_TOL);
        let mut lp = CheckResult::new("lift_after_project", Some(d), ROUNDTRIP_LIFT_PROJECT_TOL);
        for _ in 0..samples {
            let v = random_ambient(&mut rng, d, range);
            match stereo_lift(&v) {
                Ok(p) => {
                    unit.record(Some((crate::sphere::norm(p.coords()) - 1.0).abs()));
                    pl.record(Some(max_relative(stereo_project(&p).coords(), v.coords())));
                }
                Err(_) => {
                    unit.record(None);
                    pl.record(None);
                }
            }
            let p = random_sphere_point(&mut rng, d + 1, MAX_SAMPLE_LAST);
            let back = stereo_lift(&stereo_project(&p)).map(|q| max_abs(q.coords(), p.coords()));
            lp.record(back.ok());
        }
        checks.extend([pl.finish(), unit.finish(), lp.finish()]);
    }
    Ok(SuiteReport {
        suite: Suite::Roundtrip,
        seed,
        checks,
    })
}

/// For each `D` in `dims`: finite-difference conformality of `P_D` on sphere
/// samples and of `P_D⁻¹` on samples from `[-3, 3]^D`.
pub fn conformal_suite(
    dims: &[usize],
    samples: usize,
    seed: u64,
) -> Result<SuiteReport, VerifyError> {
    validate(dims, samples)?;
    let tol = ToleranceConfig::default();
    let mut checks = Vec::new();
    for &d in dims {
        let mut rng = dim_rng(seed, d);
        let mut off = CheckResult::new("forward_off_diagonal", Some(d), CONFORMAL_OFF_DIAGONAL_TOL);
        let mut scale = CheckResult::new("forward_scale", Some(d), CONFORMAL_SCALE_TOL);
        let mut inv_off =
            CheckResult::new("inverse_off_diagonal", Some(d), CONFORMAL_OFF_DIAGONAL_TOL);
        let mut inv_scale = CheckResult::new("inverse_scale", Some(d), CONFORMAL_SCALE_TOL);
        for _ in 0..samples {
            let p = random_sphere_point(&mut rng, d + 1, MAX_SAMPLE_LAST);
            let r = conformality_check(&p, &tol).ok();
            off.record(r.map(|r| r.off_diagonal_residual.max(r.diagonal_spread)));
            scale.record(r.map(|r| r.relative_scale_error()));
            let v = random_ambient(&mut rng, d, 3.0);
            let r = inverse_conformality_check(&v, &tol).ok();
            inv_off.record(r.map(|r| r.off_diagonal_residual.max(r.diagonal_spread)));
            inv_scale.record(r.map(|r| r.relative_scale_error()));
        }
        checks.extend([
            off.finish(),
            scale.finish(),
            inv_off.finish(),
            inv_scale.finish(),
        ]);
    }
    Ok(SuiteReport {
        suite: Suite::Conformal,
        seed,
        checks,
    })
}

fn circle_residual(normal: [f64; 3], offset: f64, through_pole: bool) -> Option<(f64, FitParams)> {
    let tol = ToleranceConfig::default();
    let n = AmbientVector::new(normal.to_vec()).ok()?;
    let samples = sample_sphere_circle(&n, offset, CIRCLE_SAMPLES, &tol).ok()?;
    let r = circle_image_check(&samples, through_pole, &tol).ok()?;
    let expected = if through_pole {
        ImageKind::Line
    } else {
        ImageKind::Circle
    };
    (r.kind == expected).then_some((r.residual, r.fit))
}

/// Circle images on `S²`: three fixed circles with known images plus
/// `samples` seeded random circles of each kind. Circle images live in the
/// plane, so the dimension list does not apply.
pub fn circles_suite(samples: usize, seed: u64) -> Result<SuiteReport, VerifyError> {
    if samples == 0 {
        return Err(VerifyError::InvalidSamples);
    }
    let mut checks = Vec::new();

    let mut meridian = CheckResult::new("great_circle_through_pole", None, CIRCLE_FIT_TOL);
    meridian.record(circle_residual([1.0, 0.0, 0.0], 0.0, true).map(|r| r.0));
    checks.push(meridian.finish());

    let radius_residual = |offset: f64, want: f64| {
        circle_residual([0.0, 0.0, 1.0], offset, false).map(|(res, fit)| match fit {
            FitParams::Circle { radius, .. } => res.max((radius - want).abs()),
            FitParams::Line { .. } => f64::INFINITY,
        })
    };
    let mut latitude = CheckResult::new("latitude_circle", None, CIRCLE_FIT_TOL);
    latitude.record(radius_residual(-0.5, 1.0 / 3.0_f64.sqrt()));
    checks.push(latitude.finish());
    let mut equator = CheckResult::new("equator", None, UNIT_NORM_TOL);
    equator.record(radius_residual(0.0, 1.0));
    checks.push(equator.finish());

    let mut rng = dim_rng(seed, 2);
    let mut lines = CheckResult::new("random_circles_through_pole", None, CIRCLE_FIT_TOL);
    let mut circles = CheckResult::new("random_circles_avoiding_pole", None, CIRCLE_FIT_TOL);
    for _ in 0..samples {
        // A plane through the pole: n·e3 = offset.
        let n = random_sphere_point(&mut rng, 3, 1.0)
            .into_ambient()
            .into_coords();
        let n = [n[0], n[1], n[2]];
        if n[2].abs() < 0.95 {
            lines.record(circle_residual(n, n[2], true).map(|r| r.0));
        } else {
            lines.record(circle_residual([n[0], n[1], 0.0], 0.0, true).map(|r| r.0));
        }
        // Highest circle point is offset·n₃ + r·√(1 − n₃²); keep it low.
        loop {
            let n = random_sphere_point(&mut rng, 3, 1.0)
                .into_ambient()
                .into_coords();
            let offset: f64 = rng.random_range(-0.9..0.9);
            let top = offset * n[2] + (1.0 - offset * offset).sqrt() * (1.0 - n[2] * n[2]).sqrt();
            if top <= MAX_SAMPLE_LAST {
                circles.record(circle_residual([n[0], n[1], n[2]], offset, false).map(|r| r.0));
                break;
            }
        }
    }
    checks.extend([lines.finish(), circles.finish()]);
    Ok(SuiteReport {
        suite: Suite::Circles,
        seed,
        checks,
    })
}

pub fn run_suite(
    suite: Suite,
    dims: &[usize],
    samples: usize,
    seed: u64,
    range: f64,
) -> Result<SuiteReport, VerifyError> {
    match suite {
        Suite::Roundtrip => roundtrip_suite(dims, samples, seed, range),
        Suite::Conformal => conformal_suite(dims, samples, seed),
        Suite::Circles => circles_suite(samples, seed),
    }
}
