use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::linalg::{cholesky_solve, Matrix};
use crate::losses::{Design, FeatureBasis, LeastSquares};
use crate::scalar::Scalar;

// independent random streams per purpose, all derived from the run seed
const TARGET_STREAM: u64 = 1;
const POINT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Debug, Clone)]
pub enum ProblemKind<T> {
    /// One realizable target shared by all clients, data sharded across clients.
    Homogeneous { target: Matrix<T> },
    /// A rank-1 target per client, every client holding the full sample set.
    Heterogeneous { targets: Vec<Matrix<T>> },
}

/// A federated Legendre least-squares problem: one loss model per client plus
/// the raw samples each model was built from.
#[derive(Debug, Clone)]
pub struct LlsProblem<T> {
    pub n: usize,
    pub basis: FeatureBasis,
    pub kind: ProblemKind<T>,
    pub clients: Vec<LeastSquares<T>>,
    client_points: Vec<Vec<(T, T)>>,
}

impl<T: Scalar> LlsProblem<T> {
    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    /// Sample coordinates held by client `c`.
    pub fn client_points(&self, c: usize) -> &[(T, T)] {
        &self.client_points[c]
    }
}

fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

fn unit_target<T: Scalar, R: Rng>(n: usize, rank: usize, rng: &mut R) -> Result<Matrix<T>> {
    let a = Matrix::<T>::gaussian(n, rank, rng);
    let b = Matrix::<T>::gaussian(n, rank, rng);
    let w = a.matmul_t(&b)?;
    let norm = w.frobenius_norm();
    Ok(w.scale(T::one() / norm))
}

fn uniform_points<T: Scalar, R: Rng>(count: usize, rng: &mut R) -> Vec<(T, T)> {
    (0..count)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..=1.0);
            let y: f64 = rng.random_range(-1.0..=1.0);
            (T::of(x), T::of(y))
        })
        .collect()
}

fn evaluate<T: Scalar>(target: &Matrix<T>, points: &[(T, T)], basis: FeatureBasis) -> Result<Vec<T>> {
    let n = target.rows();
    points
        .iter()
        .map(|&(x, y)| {
            let p = basis.features(x, n)?;
            let q = basis.features(y, n)?;
            let mut f = T::zero();
            for i in 0..n {
                for j in 0..n {
                    f += p[i] * target[(i, j)] * q[j];
                }
            }
            Ok(f)
        })
        .collect()
}

/// Realizable target `W_r = A Bᵀ / ‖A Bᵀ‖_F` of rank `r_target`, samples uniform
/// on `[-1, 1]²`, shuffled and cut into `clients` equal contiguous shards.
/// Samples beyond `clients * (samples / clients)` are dropped.
pub fn homogeneous<T: Scalar>(
    n: usize,
    r_target: usize,
    samples: usize,
    clients: usize,
    basis: FeatureBasis,
    seed: u64,
) -> Result<LlsProblem<T>> {
    ensure(n >= 1 && r_target >= 1 && r_target <= n, || {
        format!("target rank {r_target} must lie in [1, n={n}]")
    })?;
    ensure(clients >= 1 && samples >= clients, || {
        format!("{samples} samples cannot be shared by {clients} clients")
    })?;
    let target = unit_target::<T, _>(n, r_target, &mut stream(seed, TARGET_STREAM))?;
    let mut points = uniform_points::<T, _>(samples, &mut stream(seed, POINT_STREAM));
    points.shuffle(&mut stream(seed, SHUFFLE_STREAM));

    let shard = samples / clients;
    let mut models = Vec::with_capacity(clients);
    let mut client_points = Vec::with_capacity(clients);
    for c in 0..clients {
        let pts = points[c * shard..(c + 1) * shard].to_vec();
        let design = Arc::new(Design::from_points_in(n, &pts, basis)?);
        models.push(LeastSquares::new(design, evaluate(&target, &pts, basis)?)?);
        client_points.push(pts);
    }
    Ok(LlsProblem {
        n,
        basis,
        kind: ProblemKind::Homogeneous { target },
        clients: models,
        client_points,
    })
}

/// Shared samples uniform on `[-1, 1]²`; client `c` regresses onto its own unit-norm
/// rank-1 target `a_c b_cᵀ`.
pub fn heterogeneous<T: Scalar>(
    n: usize,
    samples: usize,
    clients: usize,
    basis: FeatureBasis,
    seed: u64,
) -> Result<LlsProblem<T>> {
    ensure(n >= 1 && clients >= 1 && samples >= 1, || {
        format!("invalid heterogeneous problem n={n}, samples={samples}, clients={clients}")
    })?;
    let mut target_rng = stream(seed, TARGET_STREAM);
    let targets = (0..clients)
        .map(|_| unit_target::<T, _>(n, 1, &mut target_rng))
        .collect::<Result<Vec<_>>>()?;
    let points = uniform_points::<T, _>(samples, &mut stream(seed, POINT_STREAM));
    let design = Arc::new(Design::from_points_in(n, &points, basis)?);
    let models = targets
        .iter()
        .map(|t| LeastSquares::new(design.clone(), evaluate(t, &points, basis)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(LlsProblem {
        n,
        basis,
        kind: ProblemKind::Heterogeneous { targets },
        client_points: vec![points; clients],
        clients: models,
    })
}

/// Global minimizer of `(1/C) Σ_c L_c`.
///
/// Homogeneous data is exactly realizable, so the target itself is returned.
/// Otherwise the vectorized normal equations are assembled from the raw
/// samples and solved by a dense Cholesky factorization.
pub fn oracle_minimizer<T: Scalar>(problem: &LlsProblem<T>) -> Result<Matrix<T>> {
    match &problem.kind {
        ProblemKind::Homogeneous { target } => Ok(target.clone()),
        ProblemKind::Heterogeneous { .. } => normal_equation_minimizer(problem),
    }
}

pub(crate) fn normal_equation_minimizer<T: Scalar>(problem: &LlsProblem<T>) -> Result<Matrix<T>> {
    let n = problem.n;
    let nn = n * n;
    let clients = problem.client_count();
    let mut normal = Matrix::<T>::zeros(nn, nn);
    let mut rhs = vec![T::zero(); nn];
    let mut z = vec![T::zero(); nn];
    for c in 0..clients {
        let points = problem.client_point_slice(c);
        let values = problem.clients[c].targets();
        let weight = T::one() / T::of((clients * points.len()) as f64);
        for (&(x, y), &f) in points.iter().zip(values) {
            let p = problem.basis.features(x, n)?;
            let q = problem.basis.features(y, n)?;
            for i in 0..n {
                for j in 0..n {
                    z[i * n + j] = p[i] * q[j];
                }
            }
            for a in 0..nn {
                let za = weight * z[a];
                rhs[a] += za * f;
                for b in 0..nn {
                    normal[(a, b)] += za * z[b];
                }
            }
        }
    }
    let w = cholesky_solve(&normal, &rhs)?;
    Matrix::from_vec(n, n, w)
}

impl<T: Scalar> LlsProblem<T> {
    fn client_point_slice(&self, c: usize) -> &[(T, T)] {
        &self.client_points[c]
    }
}
