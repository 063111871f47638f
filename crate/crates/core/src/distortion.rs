//! What the chains preserve and what they distort.
//!
//! Vertex (chord) angles and pairwise distances are compared between a
//! dataset and its image; circles on `S²` are projected and fitted to check
//! that they land on circles, or on lines when they pass through the pole.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::sphere::{
    angle_between_slices, norm, stereo_project, AmbientVector, GeometryError, SpherePoint,
    ToleranceConfig, DEFAULT_EPS_ZERO,
};

pub const HISTOGRAM_BINS: usize = 64;
/// Exhaustive triple enumeration is used up to this many vertex triples.
pub const DEFAULT_MAX_TRIPLES: u64 = 1_000_000;
pub const DEFAULT_MAX_PAIRS: u64 = 1_000_000;
pub const MIN_CIRCLE_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistortionError {
    #[error("need at least {min} points, got {found}")]
    TooFewPoints { found: usize, min: usize },
    #[error("datasets differ in row count or ids")]
    IdMismatch,
    #[error("vertex coincides with another point of the triple")]
    DegenerateTriple,
    #[error("every sampled {0} was degenerate")]
    NoValidSamples(&'static str),
    #[error("sample cap must be at least 1")]
    InvalidCap,
    #[error("row {row} lies in the pole band (last coordinate {last})")]
    PoleBand { row: usize, last: f64 },
    #[error("row {row} is not on the unit sphere: {source}")]
    NotOnSphere { row: usize, source: GeometryError },
    #[error("plane offset {offset} does not meet the unit sphere")]
    EmptyCircle { offset: f64 },
    #[error("expected dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleDistortionReport {
    /// Vertex triples measured (skipped triples excluded).
    pub samples: u64,
    /// Triples skipped because two points coincided before or after.
    pub skipped: u64,
    pub exhaustive: bool,
    pub max_abs_delta: f64,
    pub mean_abs_delta: f64,
    /// `HISTOGRAM_BINS` uniform bins of `|Δangle|` over `[0, π]`.
    pub histogram: Vec<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceDistortionReport {
    pub samples: u64,
    /// Pairs skipped because the points coincide before the map.
    pub skipped: u64,
    /// Pairs that coincide after the map (ratio 0, left out of the stats).
    pub collapsed: u64,
    pub exhaustive: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub log_ratio_stddev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Line,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum FitParams {
    Line {
        point: [f64; 2],
        direction: [f64; 2],
    },
    Circle {
        center: [f64; 2],
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleImageReport {
    pub kind: ImageKind,
    /// Max perpendicular distance to the line, or max `|‖p − c‖ − r|`.
    pub residual: f64,
    pub fit: FitParams,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn push(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn vertex_angle_slices(a: &[f64], vertex: &[f64], c: &[f64]) -> Result<f64, DistortionError> {
    let u: Vec<f64> = a.iter().zip(vertex).map(|(x, v)| x - v).collect();
    let w: Vec<f64> = c.iter().zip(vertex).map(|(x, v)| x - v).collect();
    angle_between_slices(&u, &w, DEFAULT_EPS_ZERO).map_err(|e| match e {
        GeometryError::ZeroVector { .. } => DistortionError::DegenerateTriple,
        other => DistortionError::Geometry(other),
    })
}

/// Angle at `vertex` between the rays towards `a` and `c`.
pub fn vertex_angle(
    a: &AmbientVector,
    vertex: &AmbientVector,
    c: &AmbientVector,
) -> Result<f64, DistortionError> {
    for p in [a, c] {
        if p.dim() != vertex.dim() {
            return Err(DistortionError::DimensionMismatch {
                expected: vertex.dim(),
                found: p.dim(),
            });
        }
    }
    vertex_angle_slices(a.coords(), vertex.coords(), c.coords())
}

fn check_paired(before: &Dataset, after: &Dataset, min: usize) -> Result<(), DistortionError> {
    if before.ids() != after.ids() {
        return Err(DistortionError::IdMismatch);
    }
    if before.len() < min {
        return Err(DistortionError::TooFewPoints {
            found: before.len(),
            min,
        });
    }
    Ok(())
}

/// Compares vertex angles of `before` and `after`.
///
/// All `3·C(n,3)` vertex triples are measured when that count is at most
/// `max_triples`; otherwise `max_triples` triples are drawn uniformly with a
/// generator seeded by `seed`.
pub fn angle_distortion(
    before: &Dataset,
    after: &Dataset,
    max_triples: u64,
    seed: u64,
) -> Result<AngleDistortionReport, DistortionError> {
    check_paired(before, after, 3)?;
    if max_triples == 0 {
        return Err(DistortionError::InvalidCap);
    }
    let n = before.len();
    let nn = n as u128;
    let all = nn * (nn - 1) * (nn - 2) / 2;
    let exhaustive = all <= max_triples as u128;

    let bp = before.points();
    let ap = after.points();
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    let mut samples = 0u64;
    let mut skipped = 0u64;
    let mut max_abs = 0.0_f64;
    let mut total = CompensatedSum::default();

    let mut measure = |a: usize, v: usize, c: usize| {
        let pair =
            vertex_angle_slices(bp[a].coords(), bp[v].coords(), bp[c].coords()).and_then(|x| {
                vertex_angle_slices(ap[a].coords(), ap[v].coords(), ap[c].coords()).map(|y| (x, y))
            });
        match pair {
            Ok((x, y)) => {
                let delta = (x - y).abs();
                let bin = ((delta / PI) * HISTOGRAM_BINS as f64) as usize;
                histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
                samples += 1;
                max_abs = max_abs.max(delta);
                total.push(delta);
            }
            Err(_) => skipped += 1,
        }
    };

    if exhaustive {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    measure(j, i, k);
                    measure(i, j, k);
                    measure(i, k, j);
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_triples {
            let v = rng.random_range(0..n);
            let mut a = rng.random_range(0..n - 1);
            if a >= v {
                a += 1;
            }
            let (lo, hi) = if a < v { (a, v) } else { (v, a) };
            let mut c = rng.random_range(0..n - 2);
            if c >= lo {
                c += 1;
            }
            if c >= hi {
                c += 1;
            }
            measure(a, v, c);
        }
    }

    if samples == 0 {
        return Err(DistortionError::NoValidSamples("triple"));
    }
    Ok(AngleDistortionReport {
        samples,
        skipped,
        exhaustive,
        max_abs_delta: max_abs,
        mean_abs_delta: total.value() / samples as f64,
        histogram,
        seed,
    })
}

/// Compares pairwise distances: ratios `‖y_i − y_j‖ / ‖x_i − x_j‖`.
pub fn distance_distortion(
    before: &Dataset,
    after: &Dataset,
    max_pairs: u64,
    seed: u64,
) -> Result<DistanceDistortionReport, DistortionError> {
    check_paired(before, after, 2)?;
    if max_pairs == 0 {
        return Err(DistortionError::InvalidCap);
    }
    let n = before.len();
    let all = (n as u128) * (n as u128 - 1) / 2;
    let exhaustive = all <= max_pairs as u128;
    let bp = before.points();
    let ap = after.points();

    let dist = |p: &AmbientVector, q: &AmbientVector| -> f64 {
        let d: Vec<f64> = p
            .coords()
            .iter()
            .zip(q.coords())
            .map(|(x, y)| x - y)
            .collect();
        norm(&d)
    };

    let mut logs = Vec::new();
    let mut skipped = 0u64;
    let mut collapsed = 0u64;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0_f64;
    let mut measure = |i: usize, j: usize| {
        let db = dist(&bp[i], &bp[j]);
        if db <= DEFAULT_EPS_ZERO {
            skipped += 1;
            return;
        }
        let ratio = dist(&ap[i], &ap[j]) / db;
        if ratio == 0.0 {
            collapsed += 1;
            return;
        }
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        logs.push(ratio.ln());
    };

    if exhaustive {
        for i in 0..n {
            for j in i + 1..n {
                measure(i, j);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            measure(i, j);
        }
    }

    if logs.is_empty() {
        return Err(DistortionError::NoValidSamples("pair"));
    }
    let mut sum = CompensatedSum::default();
    logs.iter().for_each(|&l| sum.push(l));
    let mean = sum.value() / logs.len() as f64;
    let mut sq = CompensatedSum::default();
    logs.iter().for_each(|&l| sq.push((l - mean) * (l - mean)));
    let stddev = (sq.value() / logs.len() as f64).sqrt();

    Ok(DistanceDistortionReport {
        samples: logs.len() as u64,
        skipped,
        collapsed,
        exhaustive,
        min_ratio,
        max_ratio,
        log_ratio_stddev: stddev,
        seed,
    })
}

/// Total-least-squares line through planar points: returns
/// `(centroid, unit direction, max perpendicular residual)`.
pub fn fit_line(points: &[[f64; 2]]) -> ([f64; 2], [f64; 2], f64) {
    let m = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / m;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = [theta.cos(), theta.sin()];
    let normal = [-dir[1], dir[0]];
    let residual = points
        .iter()
        .map(|p| ((p[0] - cx) * normal[0] + (p[1] - cy) * normal[1]).abs())
        .fold(0.0, f64::max);
    ([cx, cy], dir, residual)
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Algebraic (Kåsa) circle fit with the residual measured geometrically:
/// returns `(center, radius, max |‖p − center‖ − radius|)`.
pub fn fit_circle(points: &[[f64; 2]]) -> Option<([f64; 2], f64, f64)> {
    let m = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / m;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / m;
    // Minimize Σ (u² + v² + A·u + B·v + C)² in centered coordinates.
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for p in points {
        let (u, v) = (p[0] - cx, p[1] - cy);
        let row = [u, v, 1.0];
        let z = u * u + v * v;
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] -= row[i] * z;
        }
    }
    let [a, b, c] = solve3(ata, atb)?;
    let center = [cx - a / 2.0, cy - b / 2.0];
    let r_sq = (a * a + b * b) / 4.0 - c;
    if !(r_sq > 0.0) {
        return None;
    }
    let radius = r_sq.sqrt();
    let residual = points
        .iter()
        .map(|p| ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).abs())
        .fold(0.0, f64::max);
    Some((center, radius, residual))
}

/// Projects samples of a circle on `S²` and fits the image: a line when the
/// circle passes through the pole, a circle otherwise.
pub fn circle_image_check(
    circle_samples: &Dataset,
    through_pole: bool,
    tol: &ToleranceConfig,
) -> Result<CircleImageReport, DistortionError> {
    if circle_samples.dim() != 3 {
        return Err(DistortionError::DimensionMismatch {
            expected: 3,
            found: circle_samples.dim(),
        });
    }
    if circle_samples.len() < MIN_CIRCLE_SAMPLES {
        return Err(DistortionError::TooFewPoints {
            found: circle_samples.len(),
            min: MIN_CIRCLE_SAMPLES,
        });
    }
    let mut image = Vec::with_capacity(circle_samples.len());
    for (row, p) in circle_samples.points().iter().enumerate() {
        let sp = SpherePoint::new(p.coords().to_vec(), tol).map_err(|e| match e {
            GeometryError::PoleBand { last } => DistortionError::PoleBand { row, last },
            source => DistortionError::NotOnSphere { row, source },
        })?;
        let q = stereo_project(&sp);
        image.push([q.coords()[0], q.coords()[1]]);
    }
    if through_pole {
        let (point, direction, residual) = fit_line(&image);
        Ok(CircleImageReport {
            kind: ImageKind::Line,
            residual,
            fit: FitParams::Line { point, direction },
        })
    } else {
        let (center, radius, residual) =
            fit_circle(&image).ok_or(DistortionError::NoValidSamples("circle fit"))?;
        Ok(CircleImageReport {
            kind: ImageKind::Circle,
            residual,
            fit: FitParams::Circle { center, radius },
        })
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `m` equally spaced points on the circle `{p ∈ S² : p·n̂ = offset}`.
///
/// The first sample sits at the circle point nearest the pole (or on the
/// `x` axis when the circle is a latitude circle). A circle through the pole
/// is sampled half a step off, so the pole falls midway between samples.
pub fn sample_sphere_circle(
    normal: &AmbientVector,
    offset: f64,
    m: usize,
    tol: &ToleranceConfig,
) -> Result<Dataset, DistortionError> {
    if normal.dim() != 3 {
        return Err(DistortionError::DimensionMismatch {
            expected: 3,
            found: normal.dim(),
        });
    }
    if m < 3 {
        return Err(DistortionError::TooFewPoints { found: m, min: 3 });
    }
    let len = normal.norm();
    if !(len > tol.eps_zero) {
        return Err(GeometryError::ZeroVector { norm: len }.into());
    }
    if !(offset.abs() < 1.0) {
        return Err(DistortionError::EmptyCircle { offset });
    }
    let c = normal.coords();
    let n = [c[0] / len, c[1] / len, c[2] / len];
    let reject = |axis: [f64; 3]| -> [f64; 3] {
        let d = axis[0] * n[0] + axis[1] * n[1] + axis[2] * n[2];
        [axis[0] - d * n[0], axis[1] - d * n[1], axis[2] - d * n[2]]
    };
    let towards_pole = reject([0.0, 0.0, 1.0]);
    let w = if norm(&towards_pole) > 1e-12 {
        towards_pole
    } else {
        reject([1.0, 0.0, 0.0])
    };
    let wl = norm(&w);
    let u = [w[0] / wl, w[1] / wl, w[2] / wl];
    let v = cross(n, u);
    let radius = (1.0 - offset * offset).sqrt();
    let phase = if (n[2] - offset).abs() <= 1e-12 {
        PI / m as f64
    } else {
        0.0
    };

    let mut rows = Vec::with_capacity(m);
    for k in 0..m {
        let theta = phase + 2.0 * PI * k as f64 / m as f64;
        let (s, co) = theta.sin_cos();
        let p: Vec<f64> = (0..3)
            .map(|i| offset * n[i] + radius * (co * u[i] + s * v[i]))
            .collect();
        if p[2] > 1.0 - tol.eps_pole {
            return Err(DistortionError::PoleBand { row: k, last: p[2] });
        }
        rows.push(p);
    }
    Ok(Dataset::from_rows(rows).expect("finite circle samples"))
}
