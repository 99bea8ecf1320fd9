use crate::error::{ensure_dims, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Relative pivot size below which a column counts as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

fn rank_tol<T: Scalar>() -> T {
    T::of(RANK_TOL).max(T::epsilon() * T::of(16.0))
}

struct Reflector<T> {
    start: usize,
    v: Vec<T>,
    beta: T,
}

impl<T: Scalar> Reflector<T> {
    /// Applies `I - beta v vᵀ` to rows `start..` of every column of `m`.
    fn apply(&self, m: &mut Matrix<T>) {
        for j in 0..m.cols() {
            let mut dot = T::zero();
            for (p, &vp) in self.v.iter().enumerate() {
                dot += vp * m[(self.start + p, j)];
            }
            let f = self.beta * dot;
            if f == T::zero() {
                continue;
            }
            for (p, &vp) in self.v.iter().enumerate() {
                m[(self.start + p, j)] -= f * vp;
            }
        }
    }
}

/// Thin Householder QR of an `m x k` matrix (`m >= k`).
///
/// `diag(R) >= 0`. A column whose remaining norm falls below `1e-12 * ‖A‖_F`
/// gets no reflector, so the matching column of `Q` is the canonical basis
/// vector pushed through the preceding reflectors. `Q` therefore always has
/// orthonormal columns, whatever the rank of `A`.
pub fn qr_thin<T: Scalar>(a: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let (m, k) = a.shape();
    ensure_dims(m >= k, || format!("qr_thin needs rows >= cols, got {m}x{k}"))?;
    if !a.is_finite() {
        return Err(Error::NonFinite("qr_thin input".into()));
    }
    let tol = rank_tol::<T>() * a.frobenius_norm();

    let mut work = a.clone();
    let mut reflectors: Vec<Option<Reflector<T>>> = Vec::with_capacity(k);
    for j in 0..k {
        let norm = (j..m)
            .map(|i| work[(i, j)] * work[(i, j)])
            .sum::<T>()
            .sqrt();
        if norm <= tol || norm == T::zero() {
            reflectors.push(None);
            continue;
        }
        let x0 = work[(j, j)];
        let alpha = if x0 >= T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (j..m).map(|i| work[(i, j)]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        let refl = Reflector {
            start: j,
            v,
            beta: T::of(2.0) / vnorm2,
        };
        // only columns j.. are touched, earlier ones are already triangular
        let mut trailing = work.block(0, m, j, k);
        refl.apply(&mut trailing);
        work.set_block(0, j, &trailing);
        work[(j, j)] = alpha;
        for i in j + 1..m {
            work[(i, j)] = T::zero();
        }
        reflectors.push(Some(refl));
    }

    let mut q = Matrix::eye(m, k);
    for refl in reflectors.iter().rev().flatten() {
        refl.apply(&mut q);
    }
    let mut r = Matrix::from_fn(k, k, |i, j| if i <= j { work[(i, j)] } else { T::zero() });

    for j in 0..k {
        if r[(j, j)] < T::zero() {
            for c in 0..k {
                r[(j, c)] = -r[(j, c)];
            }
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok((q, r))
}
