#![allow(dead_code)]

pub mod dd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereochain::Dataset;

/// Distance between two finite doubles in units in the last place.
pub fn ulps_apart(a: f64, b: f64) -> u64 {
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` rows uniform on `[-1, 1]^dim` shifted away from the origin along the
/// first axis, so that no row is degenerate.
pub fn nondegenerate_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            row[0] += if row[0] >= 0.0 { 0.5 } else { -0.5 };
            row
        })
        .collect()
}

pub fn dataset(rows: Vec<Vec<f64>>) -> Dataset {
    Dataset::from_rows(rows).unwrap()
}

pub fn unit_norm_error(coords: &[f64]) -> f64 {
    (coords.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()
}
