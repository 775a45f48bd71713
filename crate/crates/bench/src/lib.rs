//! Shared fixtures for the kernel benchmarks.

use binotab::experiment::{build_network, ArchitectureSpec};
use binotab::nn::DEFAULT_MAX_NEURONS;
use binotab::{synthetic, ArchitectureKind, BinaryLabel, Matrix, Network};

/// A deterministic dense matrix with entries in `[-1, 1]`.
pub fn matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let data = (0..rows * cols)
        .map(|i| ((i as u64).wrapping_mul(2654435761).wrapping_add(seed) % 2001) as f64 / 1000.0 - 1.0)
        .collect();
    Matrix::from_vec(rows, cols, data).expect("non-empty shape")
}

/// A balanced XOR batch with `features` columns.
pub fn batch(rows: usize, features: usize, seed: u64) -> (Matrix, Vec<BinaryLabel>) {
    let data = synthetic::xor(rows, features.saturating_sub(2), seed).expect("valid fixture");
    (data.features, data.labels)
}

/// The preset network for `kind` on `features` inputs.
pub fn network(kind: ArchitectureKind, features: usize) -> Network {
    build_network(&ArchitectureSpec::preset(kind), features, 0, DEFAULT_MAX_NEURONS).expect("preset builds")
}
