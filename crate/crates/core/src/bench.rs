//! Operation-count sweeps over `(n, dim, target)` grids and log-log fits of
//! the measured counts.
//!
//! Counts are the normative signal; wall time is recorded alongside but is
//! machine dependent.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    increase_dataset, predicted_ops_increase, predicted_ops_reduce,
    published_iteration_ops_increase, reduce_dataset, tally_ops_increase, tally_ops_reduce,
    ChainError, DegeneratePolicy, TraceMode, INCREASE_STEP_CONSTANT,
    PUBLISHED_INCREASE_STEP_CONSTANT,
};
use crate::dataset::Dataset;
use crate::ops::OpCounter;
use crate::sphere::{normalize_counted, AmbientVector, ToleranceConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("infeasible grid: {0}")]
    InfeasibleGrid(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Reduce,
    Increase,
}

/// A sweep grid. For [`SweepMode::Reduce`] `target_values` are target
/// dimensions; for [`SweepMode::Increase`] they are offsets, the target
/// being `dim + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub n_values: Vec<usize>,
    pub dim_values: Vec<usize>,
    pub target_values: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub dim: usize,
    /// Target dimension (reduce) or offset (increase).
    pub target: usize,
    pub repetition: usize,
    pub ops: OpCounter,
    pub measured_total: u64,
    pub predicted_paper: u64,
    pub predicted_tally: u64,
    pub wall_time_s: f64,
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub mode: SweepMode,
    pub rows: Vec<SweepRow>,
    /// Counts against `dim` at the first `n` and first target.
    pub fit_dim: Option<LogLogFit>,
    /// Counts against `n` at the first `dim` and first target.
    pub fit_n: Option<LogLogFit>,
    /// Counts against the target (or offset) at the first `n` and `dim`.
    pub fit_target: Option<LogLogFit>,
}

impl SweepResult {
    pub fn fitted_exponent_dim(&self) -> Option<f64> {
        self.fit_dim.map(|f| f.slope)
    }

    pub fn fitted_exponent_n(&self) -> Option<f64> {
        self.fit_n.map(|f| f.slope)
    }

    pub fn fitted_exponent_target(&self) -> Option<f64> {
        self.fit_target.map(|f| f.slope)
    }
}

/// Measured count next to the published and implemented formulas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountComparison {
    pub mode: SweepMode,
    pub n: u64,
    pub input_dim: u64,
    pub target_dim: u64,
    pub measured_total: u64,
    /// Published closed form.
    pub predicted_paper: u64,
    /// Implemented per-level tally, summed.
    pub predicted_tally: u64,
    pub diff_published: i64,
    pub diff_tally: i64,
    /// Increase only: published per-iteration `4ℓ + 8` summed over the
    /// iterations performed.
    pub published_iteration_total: Option<u64>,
    /// Increase only: `c` recovered from the measurement assuming `4ℓ + c`
    /// per iteration.
    pub measured_step_constant: Option<f64>,
    pub tally_step_constant: Option<u64>,
    pub published_step_constant: Option<u64>,
}

/// Compares a measured counter with the count formulas. Dimensions are
/// dataset dimensions: `R^input_dim → R^target_dim`.
pub fn compare_counts(
    measured: &OpCounter,
    n: u64,
    input_dim: u64,
    target_dim: u64,
    mode: SweepMode,
) -> CountComparison {
    let measured_total = measured.total();
    let (published, tally) = match mode {
        SweepMode::Reduce => (
            predicted_ops_reduce(n, input_dim.saturating_sub(1), target_dim.saturating_sub(1)),
            tally_ops_reduce(n, input_dim, target_dim),
        ),
        SweepMode::Increase => (
            predicted_ops_increase(n, input_dim.saturating_sub(1), target_dim.saturating_sub(1)),
            tally_ops_increase(n, input_dim, target_dim),
        ),
    };
    let mut cmp = CountComparison {
        mode,
        n,
        input_dim,
        target_dim,
        measured_total,
        predicted_paper: published,
        predicted_tally: tally,
        diff_published: measured_total as i64 - published as i64,
        diff_tally: measured_total as i64 - tally as i64,
        published_iteration_total: None,
        measured_step_constant: None,
        tally_step_constant: None,
        published_step_constant: None,
    };
    if mode == SweepMode::Increase && target_dim > input_dim && n > 0 && input_dim > 0 {
        let iterations = target_dim - input_dim;
        let ell_sum: u64 = (input_dim - 1..target_dim - 1).sum();
        let per_row = measured_total as f64 / n as f64;
        cmp.published_iteration_total =
            Some(published_iteration_ops_increase(n, input_dim, target_dim));
        cmp.measured_step_constant = Some((per_row - 4.0 * ell_sum as f64) / iterations as f64);
        cmp.tally_step_constant = Some(INCREASE_STEP_CONSTANT);
        cmp.published_step_constant = Some(PUBLISHED_INCREASE_STEP_CONSTANT);
    }
    cmp
}

fn strictly_ascending(values: &[usize]) -> bool {
    !values.is_empty() && values.windows(2).all(|w| w[0] < w[1])
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::InfeasibleGrid(msg));
        for (name, list) in [
            ("n", &self.n_values),
            ("dim", &self.dim_values),
            ("target", &self.target_values),
        ] {
            if !strictly_ascending(list) {
                return bad(format!(
                    "{name} values must be nonempty and strictly ascending"
                ));
            }
            if list[0] == 0 {
                return bad(format!("{name} values must be positive"));
            }
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.mode == SweepMode::Reduce {
            for &dim in &self.dim_values {
                if dim < 3 {
                    return bad(format!("reduction needs dim >= 3, got {dim}"));
                }
                if let Some(&t) = self.target_values.iter().find(|&&t| t >= dim) {
                    return bad(format!("target {t} is not below dim {dim}"));
                }
            }
        }
        Ok(())
    }
}

fn grid_rng(seed: u64, n: usize, dim: usize, repetition: usize) -> ChaCha8Rng {
    let mut s = seed;
    for v in [n as u64, dim as u64, repetition as u64] {
        s = s.rotate_left(17) ^ v.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// `n` rows uniform on `[-1, 1]^dim`, resampling rows that cannot be
/// normalized.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Dataset {
    let tol = ToleranceConfig::default();
    let mut scratch = OpCounter::default();
    let rows = (0..n)
        .map(|_| loop {
            let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            if dim < 2 || normalize_counted(&row, &tol, &mut scratch).is_ok() {
                break AmbientVector::from_trusted(row);
            }
        })
        .collect();
    Dataset::new(rows).expect("nonempty uniform rows")
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_log_log(points: &[(f64, f64)]) -> Option<LogLogFit> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Some(LogLogFit {
        slope,
        intercept,
        r2,
        points: points.len(),
    })
}

/// Runs the chain on every grid point and fits the scaling exponents.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, BenchError> {
    spec.validate()?;
    let tol = ToleranceConfig::default();
    let policy = DegeneratePolicy::default();
    let mut rows = Vec::new();
    for &n in &spec.n_values {
        for &dim in &spec.dim_values {
            for &target in &spec.target_values {
                for repetition in 0..spec.repetitions {
                    let mut rng = grid_rng(spec.seed, n, dim, repetition);
                    let data = random_dataset(&mut rng, n, dim);
                    let started = Instant::now();
                    let (ops, target_dim) = match spec.mode {
                        SweepMode::Reduce => {
                            let out =
                                reduce_dataset(&data, target, &policy, &tol, TraceMode::Endpoints)?;
                            (out.counter, target)
                        }
                        SweepMode::Increase => {
                            let out =
                                increase_dataset(&data, dim + target, &tol, TraceMode::Endpoints)?;
                            (out.counter, dim + target)
                        }
                    };
                    let wall_time_s = started.elapsed().as_secs_f64();
                    let cmp =
                        compare_counts(&ops, n as u64, dim as u64, target_dim as u64, spec.mode);
                    rows.push(SweepRow {
                        n,
                        dim,
                        target,
                        repetition,
                        ops,
                        measured_total: ops.total(),
                        predicted_paper: cmp.predicted_paper,
                        predicted_tally: cmp.predicted_tally,
                        wall_time_s,
                    });
                }
            }
        }
    }

    let mean_total = |n: usize, dim: usize, target: usize| -> f64 {
        let sel: Vec<u64> = rows
            .iter()
            .filter(|r| r.n == n && r.dim == dim && r.target == target)
            .map(|r| r.measured_total)
            .collect();
        sel.iter().sum::<u64>() as f64 / sel.len() as f64
    };
    let (n0, d0, t0) = (spec.n_values[0], spec.dim_values[0], spec.target_values[0]);
    let fit_dim = fit_log_log(
        &spec
            .dim_values
            .iter()
            .map(|&d| (d as f64, mean_total(n0, d, t0)))
            .collect::<Vec<_>>(),
    );
    let fit_n = fit_log_log(
        &spec
            .n_values
            .iter()
            .map(|&n| (n as f64, mean_total(n, d0, t0)))
            .collect::<Vec<_>>(),
    );
    let fit_target = fit_log_log(
        &spec
            .target_values
            .iter()
            .map(|&t| (t as f64, mean_total(n0, d0, t)))
            .collect::<Vec<_>>(),
    );
    Ok(SweepResult {
        mode: spec.mode,
        rows,
        fit_dim,
        fit_n,
        fit_target,
    })
}

/// Flat CSV of sweep rows for external plotting. Without `include_timing`
/// the wall-time column is left empty so the file is reproducible.
pub fn sweep_rows_csv(result: &SweepResult, include_timing: bool) -> String {
    let mut out = String::from(
        "mode,n,dim,target,repetition,mults,adds,subs,divs,sqrts,measured_total,predicted_paper,predicted_tally,wall_time_s\n",
    );
    let mode = match result.mode {
        SweepMode::Reduce => "reduce",
        SweepMode::Increase => "increase",
    };
    for r in &result.rows {
        out.push_str(&format!(
            "{mode},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.dim,
            r.target,
            r.repetition,
            r.ops.mults,
            r.ops.adds,
            r.ops.subs,
            r.ops.divs,
            r.ops.sqrts,
            r.measured_total,
            r.predicted_paper,
            r.predicted_tally,
            if include_timing {
                format!("{:?}", r.wall_time_s)
            } else {
                String::new()
            }
        ));
    }
    out
}
