mod common;

use proptest::collection::vec;
use proptest::prelude::*;
use stereochain::chain::{tally_ops_increase, PointOutcome};
use stereochain::distortion::{angle_distortion, distance_distortion};
use stereochain::io::{parse_dataset, render_dataset, DatasetFileFormat};
use stereochain::{
    angle_between, increase_dataset, normalize, reduce_dataset, reduce_point, stereo_lift,
    stereo_project, AmbientVector, Dataset, DegeneratePolicy, OpCounter, SpherePoint,
    ToleranceConfig, TraceMode,
};

fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

/// A sphere point of `R^dim` at least `1e-6` below the pole.
fn sphere_point(dim: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = SpherePoint> {
    dim.prop_flat_map(|d| vec(-1.0f64..1.0, d))
        .prop_filter_map("degenerate", |g| {
            let len = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len < 1e-3 {
                return None;
            }
            let p: Vec<f64> = g.iter().map(|x| x / len).collect();
            if *p.last().unwrap() > 1.0 - 1e-6 {
                return None;
            }
            SpherePoint::new(p, &tol()).ok()
        })
}

fn ambient(
    dim: std::ops::RangeInclusive<usize>,
    range: f64,
) -> impl Strategy<Value = AmbientVector> {
    dim.prop_flat_map(move |d| vec(-range..=range, d))
        .prop_map(|c| AmbientVector::new(c).unwrap())
}

/// Rows whose first coordinate is at least 0.5 in magnitude.
fn rows(n: std::ops::RangeInclusive<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    vec(
        vec(-1.0f64..1.0, dim).prop_map(|mut r| {
            r[0] += if r[0] >= 0.0 { 0.5 } else { -0.5 };
            r
        }),
        n,
    )
}

proptest! {
    #[test]
    fn lift_after_project_is_identity(p in sphere_point(2..=64)) {
        let back = stereo_lift(&stereo_project(&p)).unwrap();
        for (a, b) in back.coords().iter().zip(p.coords()) {
            prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn project_after_lift_is_identity(v in ambient(1..=16, 1e3)) {
        let back = stereo_project(&stereo_lift(&v).unwrap());
        for (a, b) in back.coords().iter().zip(v.coords()) {
            let rel = if *b == 0.0 { a.abs() } else { ((a - b) / b).abs() };
            prop_assert!(rel <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn lift_is_unit_and_below_pole(v in ambient(1..=32, 1e5)) {
        let p = stereo_lift(&v).unwrap();
        prop_assert!(common::unit_norm_error(p.coords()) <= 1e-12);
        prop_assert!(p.last() < 1.0);
    }

    #[test]
    fn lift_last_coordinate_grows_radially(v in ambient(1..=8, 10.0), s in 1.0f64..100.0) {
        prop_assume!(v.norm() > 1e-6);
        let near = stereo_lift(&v).unwrap().last();
        let far = stereo_lift(&v.scaled(s).unwrap()).unwrap().last();
        prop_assert!(far >= near);
    }

    #[test]
    fn angles_are_scale_invariant(
        u in ambient(3..=3, 10.0),
        v in ambient(3..=3, 10.0),
        a in 1e-3f64..1e3,
        b in 1e-3f64..1e3,
    ) {
        prop_assume!(u.norm() > 1e-3 && v.norm() > 1e-3);
        let base = angle_between(&u, &v).unwrap();
        let scaled = angle_between(&u.scaled(a).unwrap(), &v.scaled(b).unwrap()).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12);
        prop_assert!((base - angle_between(&v, &u).unwrap()).abs() == 0.0);
    }

    #[test]
    fn normalize_is_idempotent(v in ambient(2..=32, 1e3)) {
        let Ok(p) = normalize(&v, &tol()) else { return Ok(()) };
        let again = normalize(&p.clone().into_ambient(), &tol()).unwrap();
        for (a, b) in again.coords().iter().zip(p.coords()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn reduce_contracts(rows in rows(1..=12, 7), target in 1usize..7) {
        let data = Dataset::from_rows(rows).unwrap();
        let out = reduce_dataset(&data, target, &DegeneratePolicy::default(), &tol(), TraceMode::Full).unwrap();
        prop_assert_eq!(out.dataset.len(), data.len());
        prop_assert_eq!(out.dataset.dim(), target);
        let dims: Vec<usize> = out.trace.levels.iter().map(|l| l.dim).collect();
        prop_assert_eq!(dims, (target..=7).rev().collect::<Vec<_>>());
        let again = reduce_dataset(&data, target, &DegeneratePolicy::default(), &tol(), TraceMode::Full).unwrap();
        prop_assert_eq!(again.dataset, out.dataset);
    }

    #[test]
    fn reduce_ignores_positive_scale(row in rows(1..=1, 5), s in 1e-3f64..1e3, target in 1usize..5) {
        let x = AmbientVector::new(row[0].clone()).unwrap();
        let run = |x: &AmbientVector| {
            let mut c = OpCounter::default();
            match reduce_point(x, 0, target, &DegeneratePolicy::default(), &tol(), &mut c).unwrap() {
                PointOutcome::Kept(y) => y.into_coords(),
                PointOutcome::Dropped { .. } => unreachable!(),
            }
        };
        let a = run(&x);
        let b = run(&x.scaled(s).unwrap());
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0), "{p} vs {q}");
        }
    }

    #[test]
    fn counts_are_additive_over_rows(rows in rows(2..=10, 5), split in 1usize..10) {
        let split = split.min(rows.len() - 1);
        let whole = Dataset::from_rows(rows.clone()).unwrap();
        let left = Dataset::from_rows(rows[..split].to_vec()).unwrap();
        let right = Dataset::from_rows(rows[split..].to_vec()).unwrap();
        let count = |d: &Dataset| {
            reduce_dataset(d, 2, &DegeneratePolicy::default(), &tol(), TraceMode::Endpoints).unwrap().counter
        };
        prop_assert_eq!(count(&whole), count(&left) + count(&right));
    }

    #[test]
    fn increase_levels_are_unit(rows in vec(vec(-1e3f64..1e3, 3), 1..8), extra in 1usize..8) {
        let data = Dataset::from_rows(rows).unwrap();
        let out = increase_dataset(&data, 3 + extra, &tol(), TraceMode::Full).unwrap();
        for level in &out.trace.levels[1..] {
            for p in level.snapshot.points() {
                prop_assert!(common::unit_norm_error(p.coords()) <= 1e-12);
            }
        }
        prop_assert_eq!(out.counter.total(), tally_ops_increase(data.len() as u64, 3, 3 + extra as u64));
    }

    #[test]
    fn csv_and_jsonl_roundtrip_bit_exact(rows in vec(vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 4), 1..6)) {
        let data = Dataset::from_rows(rows).unwrap();
        for fmt in [DatasetFileFormat::csv(), DatasetFileFormat::jsonl()] {
            let back = parse_dataset(&render_dataset(&data, &fmt).unwrap(), &fmt).unwrap();
            for (a, b) in back.points().iter().zip(data.points()) {
                let bits = |p: &AmbientVector| p.coords().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(a), bits(b));
            }
        }
    }

    #[test]
    fn similarity_leaves_angles_and_ratios(
        rows in vec(vec(-10.0f64..10.0, 2), 3..9),
        theta in 0.0f64..std::f64::consts::TAU,
        scale in 0.1f64..10.0,
        shift in vec(-5.0f64..5.0, 2),
    ) {
        let before = Dataset::from_rows(rows.clone()).unwrap();
        let (s, c) = theta.sin_cos();
        let after = Dataset::from_rows(rows.iter().map(|r| vec![
            scale * (c * r[0] - s * r[1]) + shift[0],
            scale * (s * r[0] + c * r[1]) + shift[1],
        ]).collect::<Vec<_>>()).unwrap();
        let a = angle_distortion(&before, &after, 1_000_000, 1).unwrap();
        if a.samples > 0 {
            prop_assert!(a.max_abs_delta < 1e-10, "{}", a.max_abs_delta);
        }
        let d = distance_distortion(&before, &after, 1_000_000, 1).unwrap();
        if d.samples > 0 {
            prop_assert!((d.max_ratio / d.min_ratio - 1.0).abs() < 1e-10);
            prop_assert!(d.log_ratio_stddev < 1e-10);
        }
        let same = angle_distortion(&before, &before, 1_000_000, 1).unwrap();
        prop_assert_eq!(same.max_abs_delta, 0.0);
    }
}
