use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Power-iteration estimate of the largest singular value of a self-adjoint
/// linear map acting on `rows x cols` matrices.
///
/// The start vector is a seeded Gaussian probe. For a self-adjoint map the
/// returned estimate `‖A x_k‖` is non-decreasing in `iters`.
pub fn spectral_norm<T, F>(apply: F, (rows, cols): (usize, usize), iters: usize, seed: u64) -> Result<T>
where
    T: Scalar,
    F: Fn(&Matrix<T>) -> Matrix<T>,
{
    ensure(iters >= 1, || "spectral_norm needs at least one iteration".into())?;
    ensure(rows * cols >= 1, || "spectral_norm needs a non-empty probe".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::<T>::gaussian(rows, cols, &mut rng);
    x = x.scale(T::one() / x.frobenius_norm());

    let mut estimate = T::zero();
    for _ in 0..iters {
        let y = apply(&x);
        let norm = y.frobenius_norm();
        if norm == T::zero() {
            return Ok(estimate);
        }
        estimate = estimate.max(norm);
        x = y.scale(T::one() / norm);
    }
    Ok(estimate)
}
