//! Shared fixtures for the benchmarks.

use mtl2rl_core::rng::{seeded, SimRng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A random well-conditioned encoding problem `(beta, Q, G)`.
pub fn encoding_instance(d: usize, z: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng: SimRng = seeded(seed);
    let beta = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
    let g = DMatrix::from_fn(d, z, |_, _| rng.random_range(-1.0..1.0));
    (beta, q, g)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng: SimRng = seeded(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}
