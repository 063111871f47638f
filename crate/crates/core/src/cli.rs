//! The `stereochain` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
//! failure. Every failure writes one line `ERROR <code> <subcommand>
//! <detail>` to standard error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::bench::{compare_counts, run_sweep, sweep_rows_csv, BenchError, SweepMode, SweepSpec};
use crate::chain::{
    increase_dataset, reduce_dataset, ChainError, ChainOutcome, DegeneratePolicy, PolicyMode,
    TraceMode,
};
use crate::dataset::Dataset;
use crate::distortion::{
    angle_distortion, distance_distortion, DistortionError, DEFAULT_MAX_PAIRS, DEFAULT_MAX_TRIPLES,
};
use crate::io::{
    read_dataset, write_atomic, write_dataset, DatasetFileFormat, FormatKind, HeaderMode, IoError,
    ReportDocument,
};
use crate::sphere::ToleranceConfig;
use crate::verify::{run_suite, Suite, VerifyError, DEFAULT_AMBIENT_RANGE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "stereochain",
    version,
    about = "Conformal dimensionality change by chained stereographic projections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reduce a dataset to fewer coordinates.
    Reduce(ReduceArgs),
    /// Lift a dataset to more coordinates.
    Increase(IncreaseArgs),
    /// Run a seeded property suite.
    Verify(VerifyArgs),
    /// Measure angle and distance distortion between two datasets.
    Report(ReportArgs),
    /// Sweep operation counts over a grid and fit scaling exponents.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fail,
    Perturb,
    Drop,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Roundtrip,
    Conformal,
    Circles,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Reduce,
    Increase,
}

#[derive(Debug, Args)]
struct FormatArgs {
    /// File format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// CSV field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Treat the first CSV row as a header.
    #[arg(long, conflicts_with = "no_header")]
    header: bool,
    /// Treat the first CSV row as data.
    #[arg(long)]
    no_header: bool,
}

impl FormatArgs {
    fn for_path(&self, path: &Path) -> DatasetFileFormat {
        let mut f = match self.format {
            Some(FormatArg::Csv) => DatasetFileFormat::csv(),
            Some(FormatArg::Jsonl) => DatasetFileFormat::jsonl(),
            None => DatasetFileFormat::from_path(path),
        };
        if f.kind == FormatKind::Csv {
            f.delimiter = self.delimiter;
            if self.header {
                f.header = HeaderMode::Present;
            } else if self.no_header {
                f.header = HeaderMode::Absent;
            }
        }
        f
    }

    /// Output files never carry a header.
    fn for_output(&self, path: &Path) -> DatasetFileFormat {
        let mut f = self.for_path(path);
        f.header = HeaderMode::Absent;
        f
    }
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Number of output coordinates.
    #[arg(long)]
    target_dim: usize,
    #[arg(long, value_enum, default_value = "fail")]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1e-9)]
    perturb_scale: f64,
    /// Seed for the perturb policy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-level snapshots here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Keep only the input and output levels in the trace.
    #[arg(long)]
    endpoints_only: bool,
    /// Write operation counts here.
    #[arg(long)]
    counter: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Debug, Args)]
struct IncreaseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    target_dim: usize,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    endpoints_only: bool,
    #[arg(long)]
    counter: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    /// Comma-separated plane dimensions `D` (spheres live in `R^(D+1)`).
    #[arg(long, value_delimiter = ',', default_value = "2,3,8")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Half-width of the cube roundtrip samples are drawn from.
    #[arg(long, default_value_t = DEFAULT_AMBIENT_RANGE)]
    range: f64,
    /// Also write the results as a document.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_TRIPLES)]
    max_triples: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_PAIRS)]
    max_pairs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    /// Input dataset dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    dim_list: Vec<usize>,
    /// Target dimension (reduce) or offset above the input (increase).
    #[arg(long, default_value_t = 2, conflicts_with = "target_list")]
    target_dim: usize,
    /// Several targets or offsets, fitted against each other.
    #[arg(long, value_delimiter = ',')]
    target_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the sweep rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Include wall-clock times, which makes the output nondeterministic.
    #[arg(long)]
    record_timing: bool,
}

#[derive(Debug)]
struct Failure {
    exit: i32,
    code: &'static str,
    detail: String,
}

impl Failure {
    fn usage(code: &'static str, detail: impl ToString) -> Self {
        Self {
            exit: EXIT_USAGE,
            code,
            detail: detail.to_string(),
        }
    }

    fn data(code: &'static str, detail: impl ToString) -> Self {
        Self {
            exit: EXIT_DATA,
            code,
            detail: detail.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Io { .. } => "io",
            IoError::Parse { .. } => "parse",
            IoError::RaggedRows { .. } => "ragged_rows",
            IoError::NonFiniteValue { .. } => "non_finite",
            IoError::EmptyFile => "empty_file",
            IoError::InvalidDelimiter(_) => return Failure::usage("invalid_delimiter", e),
            IoError::Serialize(_) => "serialize",
        };
        Failure::data(code, e)
    }
}

impl From<ChainError> for Failure {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::InvalidTarget { .. } => Failure::usage("invalid_target", e),
            ChainError::InvalidPolicy(_) => Failure::usage("invalid_policy", e),
            ChainError::Tolerance(_) => Failure::usage("invalid_tolerance", e),
            ChainError::Degenerate { .. } => Failure::data("degenerate", e),
            ChainError::AllRowsDropped => Failure::data("all_rows_dropped", e),
        }
    }
}

impl From<DistortionError> for Failure {
    fn from(e: DistortionError) -> Self {
        match e {
            DistortionError::InvalidCap => Failure::usage("invalid_cap", e),
            _ => Failure::data("distortion", e),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::InfeasibleGrid(_) => Failure::usage("infeasible_grid", e),
            BenchError::Chain(c) => c.into(),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        Failure::usage("invalid_arguments", e)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs the command line with process stdout/stderr and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let subcommand = args
        .get(1)
        .and_then(|a| a.to_str())
        .filter(|a| ["reduce", "increase", "verify", "report", "bench"].contains(a))
        .unwrap_or("-")
        .to_string();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let detail = one_line(first.trim_start_matches("error:"));
            let _ = writeln!(err, "ERROR usage {subcommand} {detail}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Reduce(a) => cmd_reduce(a, out, err),
        Command::Increase(a) => cmd_increase(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(
                err,
                "ERROR {} {} {}",
                f.code,
                subcommand,
                one_line(&f.detail)
            );
            f.exit
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn trace_json(outcome: &ChainOutcome) -> Value {
    let levels: Vec<Value> = outcome
        .trace
        .levels
        .iter()
        .map(|l| {
            let rows: Vec<&[f64]> = l.snapshot.points().iter().map(|p| p.coords()).collect();
            json!({ "dim": l.dim, "ids": l.snapshot.ids(), "rows": rows })
        })
        .collect();
    json!({
        "direction": outcome.trace.direction,
        "levels": levels,
        "dropped": outcome.trace.dropped,
        "collisions": outcome.collisions,
    })
}

fn op_counts_json(
    outcome: &ChainOutcome,
    n: usize,
    input_dim: usize,
    target_dim: usize,
    mode: SweepMode,
) -> Value {
    let c = outcome.counter;
    let cmp = compare_counts(&c, n as u64, input_dim as u64, target_dim as u64, mode);
    json!({
        "op_counts": {
            "mults": c.mults,
            "adds": c.adds,
            "subs": c.subs,
            "divs": c.divs,
            "sqrts": c.sqrts,
            "total": c.total(),
            "predicted_paper": cmp.predicted_paper,
            "predicted_measured_formula": cmp.predicted_tally,
        },
        "comparison": cmp,
    })
}

fn read_input(path: &Path, format: &FormatArgs) -> Result<Dataset, Failure> {
    let f = format.for_path(path);
    f.validate()?;
    Ok(read_dataset(path, &f)?)
}

fn chain_inputs(input: &Path, data: &Dataset, target_dim: usize) -> Value {
    json!({
        "input": path_str(input),
        "rows": data.len(),
        "input_dim": data.dim(),
        "target_dim": target_dim,
    })
}

fn cmd_reduce(a: ReduceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let data = read_input(&a.input, &a.format)?;
    let policy = DegeneratePolicy {
        mode: match a.policy {
            PolicyArg::Fail => PolicyMode::Fail,
            PolicyArg::Perturb => PolicyMode::Perturb,
            PolicyArg::Drop => PolicyMode::Drop,
        },
        perturb_scale: a.perturb_scale,
        rng_seed: a.seed,
    };
    let trace_mode = if a.endpoints_only {
        TraceMode::Endpoints
    } else {
        TraceMode::Full
    };
    let outcome = reduce_dataset(
        &data,
        a.target_dim,
        &policy,
        &ToleranceConfig::default(),
        trace_mode,
    )?;
    for c in &outcome.collisions {
        let _ = writeln!(
            err,
            "WARN collision reduce rows {} and {} are {:e} apart on the sphere",
            c.first, c.second, c.distance
        );
    }
    for d in &outcome.trace.dropped {
        let _ = writeln!(
            err,
            "WARN dropped reduce row {} at dimension {}: {}",
            d.id, d.dim, d.reason
        );
    }
    write_dataset(&outcome.dataset, &a.output, &a.format.for_output(&a.output))?;

    let mut inputs = chain_inputs(&a.input, &data, a.target_dim);
    inputs["policy"] = json!(policy);
    if let Some(path) = &a.trace {
        ReportDocument::new("reduce", Some(a.seed), inputs.clone(), trace_json(&outcome))
            .write(path)?;
    }
    if let Some(path) = &a.counter {
        // Counts are over every row processed, dropped rows included.
        let results = op_counts_json(
            &outcome,
            data.len(),
            data.dim(),
            a.target_dim,
            SweepMode::Reduce,
        );
        ReportDocument::new("reduce", Some(a.seed), inputs, results).write(path)?;
    }
    let _ = writeln!(
        out,
        "reduced {} rows from {} to {} coordinates ({} dropped)",
        outcome.dataset.len(),
        data.dim(),
        a.target_dim,
        outcome.trace.dropped.len()
    );
    Ok(())
}

fn cmd_increase(a: IncreaseArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let data = read_input(&a.input, &a.format)?;
    let trace_mode = if a.endpoints_only {
        TraceMode::Endpoints
    } else {
        TraceMode::Full
    };
    let outcome = increase_dataset(&data, a.target_dim, &ToleranceConfig::default(), trace_mode)?;
    write_dataset(&outcome.dataset, &a.output, &a.format.for_output(&a.output))?;
    let inputs = chain_inputs(&a.input, &data, a.target_dim);
    if let Some(path) = &a.trace {
        ReportDocument::new("increase", None, inputs.clone(), trace_json(&outcome)).write(path)?;
    }
    if let Some(path) = &a.counter {
        let results = op_counts_json(
            &outcome,
            data.len(),
            data.dim(),
            a.target_dim,
            SweepMode::Increase,
        );
        ReportDocument::new("increase", None, inputs, results).write(path)?;
    }
    let _ = writeln!(
        out,
        "lifted {} rows from {} to {} coordinates",
        outcome.dataset.len(),
        data.dim(),
        a.target_dim
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let suite = match a.suite {
        SuiteArg::Roundtrip => Suite::Roundtrip,
        SuiteArg::Conformal => Suite::Conformal,
        SuiteArg::Circles => Suite::Circles,
    };
    let report = run_suite(suite, &a.dims, a.samples, a.seed, a.range)?;
    for c in &report.checks {
        let dim = c.dim.map(|d| format!(" dim={d}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{} {} {}{} samples={} failures={} max_residual={:e} threshold={:e}",
            if c.passed { "PASS" } else { "FAIL" },
            suite.name(),
            c.name,
            dim,
            c.samples,
            c.failures,
            c.max_residual,
            c.threshold
        );
    }
    let _ = writeln!(out, "max_residual={:e}", report.max_residual());
    if let Some(path) = &a.out {
        let inputs = json!({
            "suite": suite,
            "dims": a.dims,
            "samples": a.samples,
            "range": a.range,
        });
        let results = json!({ "passed": report.passed(), "checks": report.checks });
        ReportDocument::new("verify", Some(a.seed), inputs, results).write(path)?;
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(Failure {
            exit: EXIT_VERIFY,
            code: "verification_failed",
            detail: format!("{} failed checks: {}", suite.name(), failed.join(",")),
        })
    }
}

fn cmd_report(a: ReportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let before = read_input(&a.before, &a.format)?;
    let after = read_input(&a.after, &a.format)?;
    let angle = if before.len() >= 3 {
        json!(angle_distortion(&before, &after, a.max_triples, a.seed)?)
    } else {
        Value::Null
    };
    let distance = distance_distortion(&before, &after, a.max_pairs, a.seed)?;
    let inputs = json!({
        "before": path_str(&a.before),
        "after": path_str(&a.after),
        "rows": before.len(),
        "before_dim": before.dim(),
        "after_dim": after.dim(),
        "max_triples": a.max_triples,
        "max_pairs": a.max_pairs,
    });
    let results = json!({ "angle": angle, "distance": distance });
    ReportDocument::new("report", Some(a.seed), inputs, results).write(&a.out)?;
    let _ = writeln!(
        out,
        "wrote distortion report for {} rows to {}",
        before.len(),
        path_str(&a.out)
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mode = match a.mode {
        ModeArg::Reduce => SweepMode::Reduce,
        ModeArg::Increase => SweepMode::Increase,
    };
    let spec = SweepSpec {
        mode,
        n_values: a.n_list,
        dim_values: a.dim_list,
        target_values: a.target_list.unwrap_or_else(|| vec![a.target_dim]),
        repetitions: a.repetitions,
        seed: a.seed,
    };
    let result = run_sweep(&spec)?;
    let mut results = serde_json::to_value(&result).map_err(IoError::from)?;
    if !a.record_timing {
        if let Some(rows) = results["rows"].as_array_mut() {
            for row in rows {
                row.as_object_mut().map(|o| o.remove("wall_time_s"));
            }
        }
    }
    let inputs = serde_json::to_value(&spec).map_err(IoError::from)?;
    ReportDocument::new("bench", Some(a.seed), inputs, results).write(&a.out)?;
    if let Some(path) = &a.csv {
        write_atomic(path, sweep_rows_csv(&result, a.record_timing).as_bytes())?;
    }
    let fmt = |f: Option<f64>| f.map(|s| format!("{s:.4}")).unwrap_or_else(|| "n/a".into());
    let _ = writeln!(
        out,
        "{} rows; exponent vs dim {}, vs n {}, vs target {}",
        result.rows.len(),
        fmt(result.fitted_exponent_dim()),
        fmt(result.fitted_exponent_n()),
        fmt(result.fitted_exponent_target())
    );
    Ok(())
}
