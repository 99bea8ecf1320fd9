//! Low-rank model state `W = U S Vᵀ`: initialization, basis augmentation,
//! augmented coefficient assembly, aggregation and rank truncation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, ensure_dims, Error, Result};
use crate::linalg::{qr_thin, svd_square, Matrix};
use crate::scalar::Scalar;

/// Orthonormality tolerance of stored factors.
pub const FACTOR_ORTHO_TOL: f64 = 1e-10;
/// Orthonormality tolerance for bases handed to [`basis_augment`].
pub const AUGMENT_ORTHO_TOL: f64 = 1e-8;
/// Coefficient scale used when the aggregated coefficients vanish entirely.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Tolerance scaled up for low-precision scalar types.
pub(crate) fn tol<T: Scalar>(base: f64) -> T {
    T::of(base).max(T::epsilon() * T::of(1e4))
}

/// Width of the augmented basis: the rank doubles unless the ambient dimension caps it.
pub fn augmented_width(n: usize, r: usize) -> usize {
    (2 * r).min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors<T> {
    pub u: Matrix<T>,
    pub s: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> LowRankFactors<T> {
    /// Validates shapes and orthonormality of the bases.
    pub fn new(u: Matrix<T>, s: Matrix<T>, v: Matrix<T>) -> Result<Self> {
        let f = Self { u, s, v };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, r) = self.u.shape();
        ensure_dims(
            self.v.shape() == (n, r) && self.s.shape() == (r, r) && r >= 1 && r <= n,
            || {
                format!(
                    "factors U {:?}, S {:?}, V {:?}",
                    self.u.shape(),
                    self.s.shape(),
                    self.v.shape()
                )
            },
        )?;
        let t = tol::<T>(FACTOR_ORTHO_TOL);
        if self.u.orthonormality_defect() > t || self.v.orthonormality_defect() > t {
            return Err(Error::Contract("factor bases are not orthonormal".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.u.rows()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.s.is_finite() && self.v.is_finite()
    }

    /// Number of scalars needed to ship `U`, `S` and `V`.
    pub fn payload_len(&self) -> usize {
        self.u.len() + self.s.len() + self.v.len()
    }
}

/// Augmented bases and coefficients shared by every client within a round.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState<T> {
    pub u_aug: Matrix<T>,
    pub v_aug: Matrix<T>,
    pub s_aug: Matrix<T>,
    /// Rank before augmentation.
    pub rank: usize,
}

impl<T: Scalar> AugmentedState<T> {
    pub fn width(&self) -> usize {
        self.u_aug.cols()
    }

    /// Same bases, different coefficients.
    pub fn with_coefficients(&self, s_aug: Matrix<T>) -> Result<Self> {
        ensure_dims(s_aug.shape() == self.s_aug.shape(), || {
            format!("coefficients {:?} for width {}", s_aug.shape(), self.width())
        })?;
        Ok(Self {
            s_aug,
            ..self.clone()
        })
    }

    /// `Ũ S̃ Ṽᵀ` as a dense matrix.
    pub fn reconstruct(&self) -> Matrix<T> {
        compose(&self.u_aug, &self.s_aug, &self.v_aug)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConfig {
    /// Relative singular-value threshold, `0 <= tau < 1`.
    pub tau: f64,
    pub r_min: usize,
    pub r_max: usize,
}

impl TruncationConfig {
    pub fn new(tau: f64, r_min: usize, r_max: usize) -> Result<Self> {
        let cfg = Self { tau, r_min, r_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure((0.0..1.0).contains(&self.tau), || {
            format!("tau must lie in [0, 1), got {}", self.tau)
        })?;
        ensure(self.r_min >= 1 && self.r_min <= self.r_max, || {
            format!("need 1 <= r_min <= r_max, got {} and {}", self.r_min, self.r_max)
        })
    }

    /// `r_min = 1`, `r_max = n`.
    pub fn with_tau(tau: f64, n: usize) -> Result<Self> {
        Self::new(tau, 1, n)
    }
}

/// Outcome of a truncation step.
#[derive(Debug, Clone)]
pub struct Truncation<T> {
    pub factors: LowRankFactors<T>,
    /// Singular values of the aggregated coefficients, descending.
    pub sigma: Vec<T>,
    /// Absolute threshold `tau * ‖S̃*‖_F`.
    pub theta: T,
    /// Norm of the discarded singular values.
    pub tail_norm: T,
    /// Set when every singular value was zero and an `ε·I` core was substituted.
    pub degenerate: bool,
}

fn compose<T: Scalar>(u: &Matrix<T>, s: &Matrix<T>, v: &Matrix<T>) -> Matrix<T> {
    u.matmul(s)
        .and_then(|us| us.matmul_t(v))
        .expect("conforming low-rank factors")
}

/// Random orthonormal bases with a decreasing diagonal core `diag(1, 1/2, ..., 1/r0)`.
pub fn init_factors<T: Scalar>(n: usize, r0: usize, seed: u64) -> Result<LowRankFactors<T>> {
    ensure(r0 >= 1 && r0 <= n, || {
        format!("initial rank must satisfy 1 <= r0 <= n, got r0={r0}, n={n}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, _) = qr_thin(&Matrix::<T>::gaussian(n, r0, &mut rng))?;
    let (v, _) = qr_thin(&Matrix::<T>::gaussian(n, r0, &mut rng))?;
    let diag: Vec<T> = (1..=r0).map(|i| T::one() / T::of(i as f64)).collect();
    LowRankFactors::new(u, Matrix::from_diagonal(&diag), v)
}

/// Extends the orthonormal basis `U` (n x r) by the orthonormalized directions of `G`.
///
/// Returns `(Ũ, Ū)` with `Ũ = [U | Ū]`. The leading `r` columns of `Ũ` are
/// `U` itself, bit for bit. When `2r > n` only `n - r` new directions exist and
/// `Ũ` is square.
pub fn basis_augment<T: Scalar>(u: &Matrix<T>, g: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, r) = u.shape();
    ensure_dims(g.shape() == (n, r), || {
        format!("basis {:?} with gradient {:?}", u.shape(), g.shape())
    })?;
    let defect = u.orthonormality_defect();
    if !(defect <= tol::<T>(AUGMENT_ORTHO_TOL)) {
        return Err(Error::Contract(format!(
            "basis to augment is not orthonormal (defect {defect:e})"
        )));
    }
    let width = augmented_width(n, r);
    let stacked = u.hstack(g)?.columns(0, width);
    let (q, _) = qr_thin(&stacked)?;
    let u_bar = q.columns(r, width);
    let u_aug = u.hstack(&u_bar)?;
    Ok((u_aug, u_bar))
}

/// `[[S, 0], [0, 0]]` of size `width x width`: the source coefficients expressed
/// in an augmented basis whose leading block is the source basis.
pub fn assemble_augmented_coefficients<T: Scalar>(s: &Matrix<T>, width: usize) -> Matrix<T> {
    assert!(s.is_square() && s.rows() <= width, "coefficients larger than augmented width");
    s.embed(width)
}

/// Augments both bases of `factors` with the aggregated basis gradients.
pub fn augment<T: Scalar>(
    factors: &LowRankFactors<T>,
    g_u: &Matrix<T>,
    g_v: &Matrix<T>,
) -> Result<AugmentedState<T>> {
    let (u_aug, _) = basis_augment(&factors.u, g_u)?;
    let (v_aug, _) = basis_augment(&factors.v, g_v)?;
    let s_aug = assemble_augmented_coefficients(&factors.s, u_aug.cols());
    Ok(AugmentedState {
        u_aug,
        v_aug,
        s_aug,
        rank: factors.rank(),
    })
}

/// Entrywise mean, summed in the order given.
pub fn aggregate_mean<'a, T, I>(matrices: I) -> Result<Matrix<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a Matrix<T>>,
{
    let mut iter = matrices.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Argument("aggregate_mean of an empty list".into()))?;
    let mut acc = first.clone();
    let mut count = 1usize;
    for m in iter {
        ensure_dims(m.shape() == acc.shape(), || {
            format!("aggregate_mean of {:?} and {:?}", acc.shape(), m.shape())
        })?;
        acc.axpy(T::one(), m);
        count += 1;
    }
    Ok(acc.scale(T::one() / T::of(count as f64)))
}

/// Smallest rank whose discarded tail `sqrt(Σ_{i>r} σ_i²)` is below `theta`
/// (or exactly zero when `theta` is zero). At least one.
pub fn select_rank<T: Scalar>(sigma: &[T], theta: T) -> usize {
    let k = sigma.len();
    // tails[r] = norm of sigma[r..]
    let mut tails = vec![T::zero(); k + 1];
    for i in (0..k).rev() {
        tails[i] = (tails[i + 1] * tails[i + 1] + sigma[i] * sigma[i]).sqrt();
    }
    (1..=k)
        .find(|&r| tails[r] < theta || tails[r] == T::zero())
        .unwrap_or(k.max(1))
}

/// Compresses aggregated augmented coefficients back to a rank-adaptive factorization.
pub fn truncate<T: Scalar>(state: &AugmentedState<T>, cfg: &TruncationConfig) -> Result<Truncation<T>> {
    cfg.validate()?;
    let width = state.width();
    ensure_dims(
        state.s_aug.shape() == (width, width) && state.v_aug.cols() == width,
        || format!("augmented state of width {width} with S̃ {:?}", state.s_aug.shape()),
    )?;
    let svd = svd_square(&state.s_aug)?;
    let total = svd.sigma.iter().map(|&s| s * s).sum::<T>().sqrt();
    let theta = T::of(cfg.tau) * total;
    let upper = cfg.r_max.min(width);
    let lower = cfg.r_min.min(upper);

    let degenerate = total == T::zero();
    let rank = if degenerate {
        lower
    } else {
        select_rank(&svd.sigma, theta).clamp(lower, upper)
    };
    let tail_norm = svd.sigma[rank..].iter().map(|&s| s * s).sum::<T>().sqrt();

    let u = state.u_aug.matmul(&svd.p.columns(0, rank))?;
    let v = state.v_aug.matmul(&svd.q.columns(0, rank))?;
    let s = if degenerate {
        Matrix::identity(rank).scale(T::of(DEGENERATE_EPS))
    } else {
        Matrix::from_diagonal(&svd.sigma[..rank])
    };
    Ok(Truncation {
        factors: LowRankFactors { u, s, v },
        sigma: svd.sigma,
        theta,
        tail_norm,
        degenerate,
    })
}

/// Dense `U S Vᵀ`; for metrics and tests only.
pub fn reconstruct<T: Scalar>(factors: &LowRankFactors<T>) -> Matrix<T> {
    compose(&factors.u, &factors.s, &factors.v)
}
