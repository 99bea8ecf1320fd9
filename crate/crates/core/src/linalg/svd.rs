use crate::error::{ensure_dims, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// Singular value decomposition `A = P diag(sigma) Qᵀ` of a square matrix.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub p: Matrix<T>,
    pub sigma: Vec<T>,
    pub q: Matrix<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut ps = self.p.clone();
        for j in 0..ps.cols() {
            for i in 0..ps.rows() {
                ps[(i, j)] *= self.sigma[j];
            }
        }
        ps.matmul_t(&self.q).expect("conforming factors")
    }
}

/// One-sided (Hestenes) Jacobi SVD of a `k x k` matrix; `sigma` descending.
pub fn svd_square<T: Scalar>(a: &Matrix<T>) -> Result<Svd<T>> {
    let k = a.rows();
    ensure_dims(a.is_square() && k >= 1, || {
        format!("svd_square needs a non-empty square matrix, got {:?}", a.shape())
    })?;
    if !a.is_finite() {
        return Err(Error::NonFinite("svd_square input".into()));
    }

    // work on columns: transpose so each column is a contiguous row
    let mut w = a.transpose();
    let mut v = Matrix::<T>::identity(k);
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for p in 0..k {
                    let (x, y) = (w[(i, p)], w[(j, p)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, i, j, c, s);
                rotate_rows(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<T> = (0..k)
        .map(|i| (0..k).map(|p| w[(i, p)] * w[(i, p)]).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sigma[y].partial_cmp(&sigma[x]).expect("finite singular values"));

    let smax = sigma.iter().fold(T::zero(), |m, &s| m.max(s));
    let tiny = smax * eps * T::of(k as f64);
    let mut p = Matrix::zeros(k, k);
    let mut q = Matrix::zeros(k, k);
    let mut missing = Vec::new();
    for (col, &src) in order.iter().enumerate() {
        let s = sigma[src];
        for r in 0..k {
            q[(r, col)] = v[(src, r)];
        }
        if s > tiny && s > T::zero() {
            for r in 0..k {
                p[(r, col)] = w[(src, r)] / s;
            }
        } else {
            missing.push(col);
        }
    }
    sigma = order.iter().map(|&i| sigma[i]).collect();
    complete_orthonormal(&mut p, &missing);

    Ok(Svd { p, sigma, q })
}

fn rotate_rows<T: Scalar>(m: &mut Matrix<T>, i: usize, j: usize, c: T, s: T) {
    for p in 0..m.cols() {
        let (x, y) = (m[(i, p)], m[(j, p)]);
        m[(i, p)] = c * x - s * y;
        m[(j, p)] = s * x + c * y;
    }
}

/// Fills the listed columns of `m` with canonical basis vectors orthogonalized
/// (twice) against every other column; the rest must already be orthonormal.
///
/// Each step takes the candidate with the largest residual. With `d` directions
/// still missing the residuals' squared norms sum to `d`, so the chosen one has
/// norm at least `sqrt(d / n)`.
fn complete_orthonormal<T: Scalar>(m: &mut Matrix<T>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = m.rows();
    let mut filled: Vec<usize> = (0..m.cols()).filter(|c| !missing.contains(c)).collect();
    for &col in missing {
        let mut best: Option<(T, Vec<T>)> = None;
        for candidate in 0..n {
            let mut x = vec![T::zero(); n];
            x[candidate] = T::one();
            for _ in 0..2 {
                for &f in &filled {
                    let d: T = (0..n).map(|i| m[(i, f)] * x[i]).sum();
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi -= d * m[(i, f)];
                    }
                }
            }
            let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, x));
            }
        }
        let (norm, x) = best.expect("at least one candidate");
        for (i, xi) in x.iter().enumerate() {
            m[(i, col)] = *xi / norm;
        }
        filled.push(col);
    }
}
