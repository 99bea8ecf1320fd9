#![allow(dead_code)]

use std::sync::Arc;

use fedlrt_core::linalg::{qr_thin, Matrix};
use fedlrt_core::losses::{Design, FeatureBasis, LeastSquares, Sample};
use fedlrt_core::lowrank::LowRankFactors;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::gaussian(rows, cols, rng)
}

pub fn orthonormal(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    qr_thin(&gaussian(n, r, rng)).unwrap().0
}

/// Orthonormal bases with a dense Gaussian core.
pub fn random_factors(n: usize, r: usize, rng: &mut ChaCha8Rng) -> LowRankFactors<f64> {
    let u = orthonormal(n, r, rng);
    let v = orthonormal(n, r, rng);
    LowRankFactors::new(u, gaussian(r, r, rng), v).unwrap()
}

pub fn random_samples(count: usize, rng: &mut ChaCha8Rng) -> Vec<Sample<f64>> {
    (0..count)
        .map(|_| Sample {
            x: rng.random_range(-1.0..=1.0),
            y: rng.random_range(-1.0..=1.0),
            f: rng.random_range(-1.0..=1.0),
        })
        .collect()
}

/// Least-squares client on random points with random targets.
pub fn random_client(n: usize, count: usize, rng: &mut ChaCha8Rng) -> LeastSquares<f64> {
    let samples = random_samples(count, rng);
    let points: Vec<_> = samples.iter().map(|s| (s.x, s.y)).collect();
    let design = Arc::new(Design::from_points_in(n, &points, FeatureBasis::Orthonormal).unwrap());
    LeastSquares::new(design, samples.iter().map(|s| s.f).collect()).unwrap()
}

pub fn random_clients(n: usize, clients: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<LeastSquares<f64>> {
    (0..clients).map(|_| random_client(n, count, rng)).collect()
}

pub fn dist(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    (a - b).frobenius_norm()
}
