use crate::error::{ensure_dims, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky factorization.
///
/// A non-positive pivot, or a pivot ratio beyond what the scalar type can
/// resolve, is reported as [`Error::Singular`] with a condition estimate
/// `(max_i L_ii / min_i L_ii)^2`.
pub fn cholesky_solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    ensure_dims(a.is_square() && b.len() == n, || {
        format!("cholesky_solve of {:?} with rhs length {}", a.shape(), b.len())
    })?;
    let mut l = Matrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > T::zero()) {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    let diag = l.diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((T::infinity(), T::zero()), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let condition = ((hi / lo) * (hi / lo)).to_f64_lossy();
    if condition * T::epsilon().to_f64_lossy() > 1.0 {
        return Err(Error::Singular { condition });
    }

    let mut y = b.to_vec();
    for i in 0..n {
        for p in 0..i {
            let lp = l[(i, p)];
            let yp = y[p];
            y[i] -= lp * yp;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for p in i + 1..n {
            let lp = l[(p, i)];
            let yp = y[p];
            y[i] -= lp * yp;
        }
        y[i] /= l[(i, i)];
    }
    Ok(y)
}
