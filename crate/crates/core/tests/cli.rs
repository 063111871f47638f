use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stereochain(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereochain"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_diagnostic(o: &Output, code: i32, prefix: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    let line = err
        .lines()
        .find(|l| l.starts_with("ERROR"))
        .expect("diagnostic line");
    assert!(line.starts_with(prefix), "{line}");
    assert!(line.split_whitespace().count() >= 4, "{line}");
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("a.csv"),
        "x,y,z\n1,1,1\n1,2,3\n-2,0.5,0.25\n0.1,-0.3,4\n",
    )
    .unwrap();
    dir
}

#[test]
fn reduce_writes_target_columns() {
    let dir = workspace();
    let o = stereochain(
        dir.path(),
        &[
            "reduce",
            "--input",
            "a.csv",
            "--output",
            "b.csv",
            "--target-dim",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.split(',').count() == 2));
    let first: Vec<f64> = text
        .lines()
        .next()
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    for x in first {
        assert!((x - 1.3660254037844386).abs() < 1e-15, "{text}");
    }
}

#[test]
fn reduce_rejects_target_above_input() {
    let dir = workspace();
    let o = stereochain(
        dir.path(),
        &[
            "reduce",
            "--input",
            "a.csv",
            "--output",
            "b.csv",
            "--target-dim",
            "5",
        ],
    );
    assert_diagnostic(&o, 1, "ERROR invalid_target reduce ");
    assert!(!dir.path().join("b.csv").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = workspace();
    assert_diagnostic(
        &stereochain(dir.path(), &["reduce", "--input", "a.csv"]),
        1,
        "ERROR usage reduce ",
    );
    assert_diagnostic(&stereochain(dir.path(), &["nonsense"]), 1, "ERROR usage - ");
    assert_diagnostic(
        &stereochain(
            dir.path(),
            &["verify", "--suite", "roundtrip", "--samples", "0"],
        ),
        1,
        "ERROR invalid_arguments verify ",
    );
    let o = stereochain(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("bench"));
}

#[test]
fn data_errors_exit_two() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(p.join("ragged.csv"), "1,2\n3\n").unwrap();
    std::fs::write(p.join("zero.csv"), "1,1,1\n0,0,0\n").unwrap();
    std::fs::write(p.join("bad.jsonl"), "[1,2]\n[1,\"x\"]\n").unwrap();
    let reduce = |input: &str| {
        stereochain(
            p,
            &[
                "reduce",
                "--input",
                input,
                "--output",
                "out.csv",
                "--target-dim",
                "1",
            ],
        )
    };
    assert_diagnostic(&reduce("missing.csv"), 2, "ERROR io reduce ");
    assert_diagnostic(&reduce("ragged.csv"), 2, "ERROR ragged_rows reduce ");
    assert_diagnostic(&reduce("zero.csv"), 2, "ERROR degenerate reduce ");
    assert_diagnostic(&reduce("bad.jsonl"), 2, "ERROR parse reduce ");
}

#[test]
fn drop_policy_warns_and_continues() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(p.join("zero.csv"), "1,1,1\n0,0,0\n2,1,0\n").unwrap();
    let o = stereochain(
        p,
        &[
            "reduce",
            "--input",
            "zero.csv",
            "--output",
            "out.csv",
            "--target-dim",
            "2",
            "--policy",
            "drop",
            "--trace",
            "t.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("WARN dropped reduce row 1"));
    assert_eq!(
        std::fs::read_to_string(p.join("out.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    let trace = read_json(&p.join("t.json"));
    assert_eq!(trace["results"]["dropped"][0]["id"], 1);
    assert_eq!(
        trace["results"]["levels"][0]["ids"],
        serde_json::json!([0, 2])
    );
}

#[test]
fn duplicate_rows_raise_collision_warning() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(p.join("dup.csv"), "1,2,3\n2,4,6\n0,1,0\n").unwrap();
    let o = stereochain(
        p,
        &[
            "reduce",
            "--input",
            "dup.csv",
            "--output",
            "out.csv",
            "--target-dim",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stderr(&o).contains("WARN collision reduce rows 0 and 1"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn counter_documents_follow_schema() {
    let dir = workspace();
    let p = dir.path();
    let o = stereochain(
        p,
        &[
            "reduce",
            "--input",
            "a.csv",
            "--output",
            "b.csv",
            "--target-dim",
            "1",
            "--counter",
            "rc.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(&p.join("rc.json"));
    for key in ["schema_version", "command", "seed", "inputs", "results"] {
        assert!(doc.get(key).is_some(), "{key}");
    }
    let counts = &doc["results"]["op_counts"];
    for key in [
        "mults",
        "adds",
        "subs",
        "divs",
        "sqrts",
        "total",
        "predicted_paper",
        "predicted_measured_formula",
    ] {
        assert!(counts[key].is_u64(), "{key}");
    }
    // Two levels: 4·3+1 and 4·2+1 per row, four rows.
    assert_eq!(counts["total"], 88);
    assert_eq!(counts["predicted_paper"], 88);

    let o = stereochain(
        p,
        &[
            "increase",
            "--input",
            "b.csv",
            "--output",
            "c.csv",
            "--target-dim",
            "3",
            "--counter",
            "ic.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(&p.join("ic.json"));
    let r = &doc["results"];
    // Levels ℓ = 0, 1 cost 7 + 11 per row as tallied, 8 + 12 as published.
    assert_eq!(r["op_counts"]["total"], 72);
    assert_eq!(r["op_counts"]["predicted_measured_formula"], 72);
    assert_eq!(r["op_counts"]["predicted_paper"], 112);
    assert_eq!(r["comparison"]["published_iteration_total"], 80);
    assert_eq!(r["comparison"]["tally_step_constant"], 7);
    assert_eq!(r["comparison"]["published_step_constant"], 8);
    assert_eq!(r["comparison"]["measured_step_constant"], 7.0);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = workspace();
    let p = dir.path();
    let run = |tag: &str| {
        let (out, trace, counter) = (
            format!("o{tag}.csv"),
            format!("t{tag}.json"),
            format!("c{tag}.json"),
        );
        let o = stereochain(
            p,
            &[
                "reduce",
                "--input",
                "a.csv",
                "--output",
                &out,
                "--target-dim",
                "2",
                "--trace",
                &trace,
                "--counter",
                &counter,
                "--policy",
                "perturb",
                "--seed",
                "5",
            ],
        );
        assert_eq!(o.status.code(), Some(0));
        [out, trace, counter].map(|f| std::fs::read(p.join(f)).unwrap())
    };
    assert_eq!(run("1"), run("2"));

    let bench = |tag: &str| {
        let (out, csv) = (format!("b{tag}.json"), format!("b{tag}.csv"));
        let o = stereochain(
            p,
            &[
                "bench",
                "--mode",
                "increase",
                "--n-list",
                "2,4",
                "--dim-list",
                "3,5",
                "--target-list",
                "1,2,4",
                "--seed",
                "3",
                "--out",
                &out,
                "--csv",
                &csv,
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        [out, csv].map(|f| std::fs::read(p.join(f)).unwrap())
    };
    let a = bench("1");
    assert_eq!(a, bench("2"));
    assert!(!String::from_utf8_lossy(&a[0]).contains("wall_time"));
}

#[test]
fn verify_roundtrip_reports_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    let o = stereochain(
        dir.path(),
        &[
            "verify",
            "--suite",
            "roundtrip",
            "--dims",
            "2,3,8",
            "--samples",
            "1000",
            "--seed",
            "7",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let max: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max_residual="))
        .expect("summary line")
        .parse()
        .unwrap();
    assert!(max < 1e-10, "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 9);
}

#[test]
fn verify_other_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["conformal", "circles"] {
        let o = stereochain(
            dir.path(),
            &[
                "verify",
                "--suite",
                suite,
                "--samples",
                "50",
                "--out",
                "v.json",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", stdout(&o));
        assert_eq!(
            read_json(&dir.path().join("v.json"))["results"]["passed"],
            true
        );
    }
}

#[test]
fn verify_failure_exits_three() {
    // Squared norms overflow at this range, so every lift fails.
    let dir = tempfile::tempdir().unwrap();
    let o = stereochain(
        dir.path(),
        &[
            "verify",
            "--suite",
            "roundtrip",
            "--dims",
            "2",
            "--samples",
            "5",
            "--range",
            "1e300",
        ],
    );
    assert_diagnostic(&o, 3, "ERROR verification_failed verify ");
    assert!(stdout(&o).contains("FAIL roundtrip project_after_lift"));
}

#[test]
fn bench_rejects_infeasible_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = stereochain(
        dir.path(),
        &[
            "bench",
            "--mode",
            "reduce",
            "--n-list",
            "5",
            "--dim-list",
            "4,8",
            "--target-dim",
            "4",
            "--out",
            "b.json",
        ],
    );
    assert_diagnostic(&o, 1, "ERROR infeasible_grid bench ");
}

#[test]
fn report_on_jsonl_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("x.jsonl"), "[0,0]\n[1,0]\n[0,1]\n[1,1]\n").unwrap();
    std::fs::write(p.join("y.jsonl"), "[0,0]\n[2,0]\n[0,2]\n[2,2]\n").unwrap();
    let o = stereochain(
        p,
        &[
            "report", "--before", "x.jsonl", "--after", "y.jsonl", "--out", "r.json", "--seed", "4",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(&p.join("r.json"));
    assert_eq!(doc["seed"], 4);
    assert_eq!(doc["results"]["angle"]["max_abs_delta"], 0.0);
    assert_eq!(doc["results"]["distance"]["min_ratio"], 2.0);
    assert_eq!(doc["results"]["distance"]["max_ratio"], 2.0);

    std::fs::write(p.join("short.jsonl"), "[0,0]\n[2,0]\n").unwrap();
    let o = stereochain(
        p,
        &[
            "report",
            "--before",
            "x.jsonl",
            "--after",
            "short.jsonl",
            "--out",
            "r.json",
        ],
    );
    assert_diagnostic(&o, 2, "ERROR distortion report ");
}
