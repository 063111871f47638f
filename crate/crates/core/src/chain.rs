//! The reduction and increase chains.
//!
//! Reduction maps each row of `R^(D+1)` down to `R^(d+1)` by repeating
//! "normalize onto the sphere, then project from the pole", losing one
//! dimension per level. Increase maps `R^(D+1)` up to `R^(D'+1)` by
//! repeating the inverse projection, gaining one dimension per level.
//! Rows are processed independently and every arithmetic operation is
//! tallied in an [`OpCounter`].
//!
//! Counting convention (reduction, a level whose input has dimension `m`):
//! `m` squarings, `m` additions for the squared norm (accumulated from zero),
//! one square root, `m` normalizing divisions, one subtraction `1 − χ_m` and
//! `m − 1` projecting divisions, i.e. `4m + 1` operations. Summed over the
//! levels this is exactly `Σ_{ℓ=0}^{D−(d+1)} (4(D−ℓ) + 5)` per row.
//!
//! Increase, a level whose input has dimension `ℓ + 1`: `2(ℓ+1)`
//! multiplications, `ℓ + 2` additions, one subtraction and `ℓ + 2` divisions,
//! i.e. `4ℓ + 7` operations. The published per-iteration figure is `4ℓ + 8`;
//! both are reported by [`compare_counts`](crate::bench::compare_counts).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::ops::OpCounter;
use crate::sphere::{
    normalize_counted, stereo_lift_counted, stereo_project_counted, AmbientVector, GeometryError,
    ToleranceConfig,
};

/// Distance below which two normalized rows are reported as colliding.
pub const COLLISION_DISTANCE: f64 = 1e-9;

/// Per-iteration constant of the implemented increase tally (`4ℓ + 7`).
pub const INCREASE_STEP_CONSTANT: u64 = 7;
/// Per-iteration constant stated for the increase algorithm (`4ℓ + 8`).
pub const PUBLISHED_INCREASE_STEP_CONSTANT: u64 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("invalid target dimension {target_dim} for input dimension {input_dim}: {reason}")]
    InvalidTarget {
        input_dim: usize,
        target_dim: usize,
        reason: &'static str,
    },
    #[error("row {row} at dimension {dim}: {source}")]
    Degenerate {
        row: u64,
        dim: usize,
        source: GeometryError,
    },
    #[error("every row was dropped as degenerate")]
    AllRowsDropped,
    #[error("invalid policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(transparent)]
    Tolerance(GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    /// Abort with the row id and level.
    Fail,
    /// Add seeded uniform noise once and retry.
    Perturb,
    /// Omit the row from the output.
    Drop,
}

/// How the reduction treats rows that normalize to zero or to the pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneratePolicy {
    pub mode: PolicyMode,
    pub perturb_scale: f64,
    pub rng_seed: u64,
}

impl Default for DegeneratePolicy {
    fn default() -> Self {
        Self {
            mode: PolicyMode::Fail,
            perturb_scale: 1e-9,
            rng_seed: 0,
        }
    }
}

impl DegeneratePolicy {
    pub fn with_mode(mode: PolicyMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if !(self.perturb_scale > 0.0 && self.perturb_scale.is_finite()) {
            return Err(ChainError::InvalidPolicy(
                "perturb_scale must be positive and finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Reduce,
    Increase,
}

/// Which intermediate datasets a chain keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    /// Every level, input and output included.
    #[default]
    Full,
    /// Input and output only.
    Endpoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLevel {
    pub dim: usize,
    pub snapshot: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedRow {
    pub id: u64,
    /// Dimension of the iterate that could not be normalized.
    pub dim: usize,
    pub reason: String,
}

/// Snapshots of a chain run. Snapshots hold the rows that reached the
/// output, so all levels share the output's ids; dropped rows are listed
/// separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub direction: Direction,
    pub levels: Vec<TraceLevel>,
    pub dropped: Vec<DroppedRow>,
}

/// Two input rows that coincide after the first normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionWarning {
    pub first: u64,
    pub second: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub dataset: Dataset,
    pub trace: ChainTrace,
    pub counter: OpCounter,
    pub collisions: Vec<CollisionWarning>,
}

/// Result of pushing one row through the reduction chain.
#[derive(Debug, Clone, PartialEq)]
pub enum PointOutcome {
    Kept(AmbientVector),
    /// The row was degenerate under [`PolicyMode::Drop`].
    Dropped {
        dim: usize,
        reason: GeometryError,
    },
}

enum RowFate {
    Done {
        levels: Vec<Vec<f64>>,
        first_sphere: Option<Vec<f64>>,
    },
    Dropped {
        dim: usize,
        reason: GeometryError,
    },
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-row generator derived from `(seed, row id)`.
fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(row)))
}

fn perturb(x: &mut [f64], rng: &mut ChaCha8Rng, scale: f64, counter: &mut OpCounter) {
    let m = x.len() as u64;
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    counter.mul(m);
    counter.add(m);
    counter.sqrt(1);
    let magnitude = scale * norm.max(1.0);
    counter.mul(1);
    for v in x.iter_mut() {
        *v += magnitude * rng.random_range(-1.0..=1.0);
    }
    counter.mul(m);
    counter.add(m);
}

fn check_reduce_target(input_dim: usize, target_dim: usize) -> Result<(), ChainError> {
    let invalid = |reason| {
        Err(ChainError::InvalidTarget {
            input_dim,
            target_dim,
            reason,
        })
    };
    if input_dim < 3 {
        return invalid("reduction needs input dimension of at least 3");
    }
    if target_dim < 1 {
        return invalid("target dimension must be at least 1");
    }
    if target_dim >= input_dim {
        return invalid("target dimension must be below the input dimension");
    }
    Ok(())
}

fn check_increase_target(input_dim: usize, target_dim: usize) -> Result<(), ChainError> {
    if target_dim <= input_dim {
        return Err(ChainError::InvalidTarget {
            input_dim,
            target_dim,
            reason: "target dimension must exceed the input dimension",
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn reduce_row(
    x: &[f64],
    row: u64,
    target_dim: usize,
    policy: &DegeneratePolicy,
    tol: &ToleranceConfig,
    counter: &mut OpCounter,
    keep_levels: bool,
    keep_first_sphere: bool,
) -> Result<RowFate, ChainError> {
    let mut current = x.to_vec();
    let mut rng: Option<ChaCha8Rng> = None;
    let mut levels = Vec::new();
    let mut first_sphere = None;

    while current.len() > target_dim {
        let dim = current.len();
        let sphere = match normalize_counted(&current, tol, counter) {
            Ok(p) => p,
            Err(reason) => match policy.mode {
                PolicyMode::Fail => {
                    return Err(ChainError::Degenerate {
                        row,
                        dim,
                        source: reason,
                    })
                }
                PolicyMode::Drop => return Ok(RowFate::Dropped { dim, reason }),
                PolicyMode::Perturb => {
                    let rng = rng.get_or_insert_with(|| row_rng(policy.rng_seed, row));
                    perturb(&mut current, rng, policy.perturb_scale, counter);
                    normalize_counted(&current, tol, counter)
                        .map_err(|source| ChainError::Degenerate { row, dim, source })?
                }
            },
        };
        if keep_first_sphere && first_sphere.is_none() {
            first_sphere = Some(sphere.coords().to_vec());
        }
        current = stereo_project_counted(&sphere, counter).into_coords();
        if keep_levels {
            levels.push(current.clone());
        }
    }
    if !keep_levels {
        levels.push(current);
    }
    Ok(RowFate::Done {
        levels,
        first_sphere,
    })
}

/// Reduces one row to `target_dim` coordinates.
///
/// `row` seeds the perturbation stream and labels errors.
pub fn reduce_point(
    x: &AmbientVector,
    row: u64,
    target_dim: usize,
    policy: &DegeneratePolicy,
    tol: &ToleranceConfig,
    counter: &mut OpCounter,
) -> Result<PointOutcome, ChainError> {
    check_reduce_target(x.dim(), target_dim)?;
    policy.validate()?;
    tol.validate().map_err(ChainError::Tolerance)?;
    match reduce_row(
        x.coords(),
        row,
        target_dim,
        policy,
        tol,
        counter,
        false,
        false,
    )? {
        RowFate::Done { mut levels, .. } => Ok(PointOutcome::Kept(AmbientVector::from_trusted(
            levels.pop().expect("final level"),
        ))),
        RowFate::Dropped { dim, reason } => Ok(PointOutcome::Dropped { dim, reason }),
    }
}

/// Reduces every row of `data` to `target_dim` coordinates.
///
/// Output rows keep their input ids and order. Under [`PolicyMode::Drop`]
/// degenerate rows are omitted and listed in the trace.
pub fn reduce_dataset(
    data: &Dataset,
    target_dim: usize,
    policy: &DegeneratePolicy,
    tol: &ToleranceConfig,
    trace_mode: TraceMode,
) -> Result<ChainOutcome, ChainError> {
    let input_dim = data.dim();
    check_reduce_target(input_dim, target_dim)?;
    policy.validate()?;
    tol.validate().map_err(ChainError::Tolerance)?;

    let keep_levels = trace_mode == TraceMode::Full;
    let mut counter = OpCounter::default();
    let mut kept_ids = Vec::with_capacity(data.len());
    let mut kept_inputs = Vec::with_capacity(data.len());
    let mut row_levels = Vec::with_capacity(data.len());
    let mut spheres = Vec::with_capacity(data.len());
    let mut dropped = Vec::new();

    for (id, x) in data.iter() {
        let mut row_counter = OpCounter::default();
        let fate = reduce_row(
            x.coords(),
            id,
            target_dim,
            policy,
            tol,
            &mut row_counter,
            keep_levels,
            true,
        )?;
        counter += row_counter;
        match fate {
            RowFate::Done {
                levels,
                first_sphere,
            } => {
                kept_ids.push(id);
                kept_inputs.push(x.clone());
                row_levels.push(levels);
                spheres.push(first_sphere.expect("at least one level"));
            }
            RowFate::Dropped { dim, reason } => dropped.push(DroppedRow {
                id,
                dim,
                reason: reason.to_string(),
            }),
        }
    }
    if kept_ids.is_empty() {
        return Err(ChainError::AllRowsDropped);
    }

    let level_dims: Vec<usize> = if keep_levels {
        (target_dim..input_dim).rev().collect()
    } else {
        vec![target_dim]
    };
    let mut levels = Vec::with_capacity(level_dims.len() + 1);
    levels.push(TraceLevel {
        dim: input_dim,
        snapshot: Dataset::from_trusted(kept_inputs, kept_ids.clone(), input_dim),
    });
    for (k, &dim) in level_dims.iter().enumerate() {
        let points = row_levels
            .iter_mut()
            .map(|lv| AmbientVector::from_trusted(std::mem::take(&mut lv[k])))
            .collect();
        levels.push(TraceLevel {
            dim,
            snapshot: Dataset::from_trusted(points, kept_ids.clone(), dim),
        });
    }
    let dataset = levels.last().expect("output level").snapshot.clone();
    let collisions = find_collisions(&spheres, &kept_ids, COLLISION_DISTANCE);

    Ok(ChainOutcome {
        dataset,
        trace: ChainTrace {
            direction: Direction::Reduce,
            levels,
            dropped,
        },
        counter,
        collisions,
    })
}

/// Pairs of points within `radius` of each other, found by a sweep over the
/// first coordinate.
fn find_collisions(points: &[Vec<f64>], ids: &[u64], radius: f64) -> Vec<CollisionWarning> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j][0] - points[i][0] > radius {
                break;
            }
            let d = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d <= radius {
                let (a, b) = (ids[i.min(j)], ids[i.max(j)]);
                out.push(CollisionWarning {
                    first: a,
                    second: b,
                    distance: d,
                });
            }
        }
    }
    out.sort_by_key(|w| (w.first, w.second));
    out
}

fn increase_row(
    x: &[f64],
    target_dim: usize,
    tol: &ToleranceConfig,
    counter: &mut OpCounter,
    keep_levels: bool,
) -> Result<Vec<Vec<f64>>, (usize, GeometryError)> {
    let mut current = x.to_vec();
    let mut levels = Vec::new();
    while current.len() < target_dim {
        let dim = current.len();
        current = stereo_lift_counted(&current, tol, counter)
            .map_err(|e| (dim, e))?
            .into_ambient()
            .into_coords();
        if keep_levels {
            levels.push(current.clone());
        }
    }
    if !keep_levels {
        levels.push(current);
    }
    Ok(levels)
}

/// Lifts one row `target_dim − dim(x)` times. The result lies on the unit
/// sphere of `R^target_dim`.
pub fn increase_point(
    x: &AmbientVector,
    target_dim: usize,
    tol: &ToleranceConfig,
    counter: &mut OpCounter,
) -> Result<AmbientVector, GeometryError> {
    if target_dim <= x.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: x.dim(),
            right: target_dim,
        });
    }
    let mut levels =
        increase_row(x.coords(), target_dim, tol, counter, false).map_err(|(_, e)| e)?;
    Ok(AmbientVector::from_trusted(
        levels.pop().expect("final level"),
    ))
}

/// Lifts every row of `data` to `target_dim` coordinates.
pub fn increase_dataset(
    data: &Dataset,
    target_dim: usize,
    tol: &ToleranceConfig,
    trace_mode: TraceMode,
) -> Result<ChainOutcome, ChainError> {
    let input_dim = data.dim();
    check_increase_target(input_dim, target_dim)?;
    tol.validate().map_err(ChainError::Tolerance)?;

    let keep_levels = trace_mode == TraceMode::Full;
    let mut counter = OpCounter::default();
    let mut row_levels = Vec::with_capacity(data.len());
    for (id, x) in data.iter() {
        let mut row_counter = OpCounter::default();
        let levels = increase_row(x.coords(), target_dim, tol, &mut row_counter, keep_levels)
            .map_err(|(dim, source)| ChainError::Degenerate {
                row: id,
                dim,
                source,
            })?;
        counter += row_counter;
        row_levels.push(levels);
    }

    let level_dims: Vec<usize> = if keep_levels {
        (input_dim + 1..=target_dim).collect()
    } else {
        vec![target_dim]
    };
    let ids = data.ids().to_vec();
    let mut levels = Vec::with_capacity(level_dims.len() + 1);
    levels.push(TraceLevel {
        dim: input_dim,
        snapshot: data.clone(),
    });
    for (k, &dim) in level_dims.iter().enumerate() {
        let points = row_levels
            .iter_mut()
            .map(|lv| AmbientVector::from_trusted(std::mem::take(&mut lv[k])))
            .collect();
        levels.push(TraceLevel {
            dim,
            snapshot: Dataset::from_trusted(points, ids.clone(), dim),
        });
    }
    let dataset = levels.last().expect("output level").snapshot.clone();

    Ok(ChainOutcome {
        dataset,
        trace: ChainTrace {
            direction: Direction::Increase,
            levels,
            dropped: Vec::new(),
        },
        counter,
        collisions: Vec::new(),
    })
}

/// Published closed-form count for reducing `n` rows from `R^(D+1)` to
/// `R^(d+1)`: `(Σ_{ℓ=0}^{D−(d+1)} (4(D−ℓ) + 5)) · n`.
///
/// `d = 0` (a one-dimensional target) is accepted; `d ≥ D` is the empty sum.
pub fn predicted_ops_reduce(n: u64, big_d: u64, d: u64) -> u64 {
    if d >= big_d {
        return 0;
    }
    (0..=big_d - (d + 1))
        .map(|l| 4 * (big_d - l) + 5)
        .sum::<u64>()
        * n
}

/// Published closed-form count for lifting `n` rows from `R^(D+1)` to
/// `R^(D'+1)`: `4n(𝔡+1)D + 2n𝔡(𝔡+1) + 8n𝔡` with `𝔡 = D' − D`.
pub fn predicted_ops_increase(n: u64, big_d: u64, big_dp: u64) -> u64 {
    debug_assert!(big_dp > big_d);
    let gap = big_dp.saturating_sub(big_d);
    4 * n * (gap + 1) * big_d + 2 * n * gap * (gap + 1) + 8 * n * gap
}

/// Reduction count under the implemented tally, in dataset dimensions:
/// `n · Σ_{m=target+1}^{input} (4m + 1)`.
pub fn tally_ops_reduce(n: u64, input_dim: u64, target_dim: u64) -> u64 {
    n * (target_dim + 1..=input_dim).map(|m| 4 * m + 1).sum::<u64>()
}

/// Increase count under the implemented tally, in dataset dimensions:
/// `n · Σ_{ℓ=input−1}^{target−2} (4ℓ + 7)`.
pub fn tally_ops_increase(n: u64, input_dim: u64, target_dim: u64) -> u64 {
    increase_iteration_sum(n, input_dim, target_dim, INCREASE_STEP_CONSTANT)
}

/// Increase count with the published per-iteration figure `4ℓ + 8`, summed
/// over the iterations actually performed.
pub fn published_iteration_ops_increase(n: u64, input_dim: u64, target_dim: u64) -> u64 {
    increase_iteration_sum(n, input_dim, target_dim, PUBLISHED_INCREASE_STEP_CONSTANT)
}

fn increase_iteration_sum(n: u64, input_dim: u64, target_dim: u64, constant: u64) -> u64 {
    if input_dim == 0 || target_dim <= input_dim {
        return 0;
    }
    n * (input_dim - 1..target_dim - 1)
        .map(|l| 4 * l + constant)
        .sum::<u64>()
}
