//! Seeded synthetic datasets for tests, benchmarks and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::losses::BinaryLabel;
use crate::tensor::Matrix;

/// Continuous XOR of the first two features plus `noise_features` standard
/// normal columns.
///
/// Signal feature `i` is `(2 b_i - 1) * u` with `b_i` a fair bit and `u`
/// uniform on `[0.5, 1.5)`. The label is positive when exactly one bit is set.
pub fn xor(rows: usize, noise_features: usize, seed: u64) -> Result<TabularDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = 2 + noise_features;
    let mut x = Vec::with_capacity(rows * cols);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let b0: bool = rng.random();
        let b1: bool = rng.random();
        for b in [b0, b1] {
            let sign = if b { 1.0 } else { -1.0 };
            x.push(sign * rng.random_range(0.5..1.5));
        }
        for _ in 0..noise_features {
            x.push(rng.sample::<f64, _>(StandardNormal));
        }
        y.push(if b0 ^ b1 {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        });
    }
    TabularDataset::from_parts(Matrix::from_vec(rows, cols, x)?, y)
}

/// Two uniform features on `[-1, 1)` labelled by the sign of their sum.
/// Points with `|x0 + x1| < margin` are rejected.
pub fn separable(rows: usize, margin: f64, seed: u64) -> Result<TabularDataset> {
    if !(0.0..2.0).contains(&margin) {
        return Err(Error::invalid("margin must be in [0, 2)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(rows * 2);
    let mut y = Vec::with_capacity(rows);
    while y.len() < rows {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let s = a + b;
        if s.abs() < margin || s == 0.0 {
            continue;
        }
        x.extend([a, b]);
        y.push(BinaryLabel::from_score(s));
    }
    TabularDataset::from_parts(Matrix::from_vec(rows, 2, x)?, y)
}

/// `features` standard normal columns with exactly `positives` positive rows
/// at random positions.
pub fn imbalanced(rows: usize, positives: usize, features: usize, seed: u64) -> Result<TabularDataset> {
    if positives > rows {
        return Err(Error::invalid("more positives than rows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..rows * features)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut y = vec![BinaryLabel::Negative; rows];
    let idx = rand::seq::index::sample(&mut rng, rows, positives);
    for i in idx {
        y[i] = BinaryLabel::Positive;
    }
    TabularDataset::from_parts(Matrix::from_vec(rows, features, x)?, y)
}
