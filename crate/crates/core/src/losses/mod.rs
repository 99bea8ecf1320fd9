//! Loss models and the gradient identities the low-rank training relies on.

mod legendre;
mod lls;
mod problems;
mod quadratic;

pub use legendre::{legendre_features, FeatureBasis};
pub use lls::{lls_loss, lls_weight_gradient, Design, LeastSquares, Sample};
pub use problems::{heterogeneous, homogeneous, oracle_minimizer, LlsProblem, ProblemKind};
pub use quadratic::DiagonalQuadratic;

use crate::error::{ensure_dims, Result};
use crate::linalg::{spectral_norm, Matrix};
use crate::lowrank::{AugmentedState, LowRankFactors};
use crate::scalar::Scalar;

/// A client objective over square weight matrices.
pub trait LossModel<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, w: &Matrix<T>) -> T;

    fn weight_gradient(&self, w: &Matrix<T>) -> Matrix<T>;

    /// Hessian-vector product `∇²L · dw`.
    ///
    /// The default differences two gradients, which is exact for quadratic losses.
    fn hessian_apply(&self, dw: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        let zero = Matrix::zeros(n, n);
        &self.weight_gradient(dw) - &self.weight_gradient(&zero)
    }

    /// The loss restricted to coefficients in fixed bases, `S ↦ L(U S Vᵀ)`.
    fn restrict<'a>(&'a self, u: &Matrix<T>, v: &Matrix<T>) -> Box<dyn CoefficientLoss<T> + 'a> {
        Box::new(Projected {
            model: self,
            u: u.clone(),
            v: v.clone(),
        })
    }
}

/// Objective over the coefficient matrix only.
pub trait CoefficientLoss<T: Scalar>: Send + Sync {
    fn loss(&self, s: &Matrix<T>) -> T;

    /// `Uᵀ ∇_W L(U S Vᵀ) V`.
    fn gradient(&self, s: &Matrix<T>) -> Matrix<T>;
}

pub(crate) struct Projected<'a, T, M: ?Sized> {
    pub(crate) model: &'a M,
    pub(crate) u: Matrix<T>,
    pub(crate) v: Matrix<T>,
}

impl<T: Scalar, M: LossModel<T> + ?Sized> Projected<'_, T, M> {
    fn lift(&self, s: &Matrix<T>) -> Matrix<T> {
        self.u.matmul(s).and_then(|us| us.matmul_t(&self.v)).expect("conforming coefficients")
    }
}

impl<T: Scalar, M: LossModel<T> + ?Sized> CoefficientLoss<T> for Projected<'_, T, M> {
    fn loss(&self, s: &Matrix<T>) -> T {
        self.model.loss(&self.lift(s))
    }

    fn gradient(&self, s: &Matrix<T>) -> Matrix<T> {
        let g = self.model.weight_gradient(&self.lift(s));
        self.u
            .t_matmul(&g)
            .and_then(|ug| ug.matmul(&self.v))
            .expect("conforming gradient")
    }
}

/// Gradients of `L(U S Vᵀ)` with respect to each factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGradients<T> {
    pub g_u: Matrix<T>,
    pub g_v: Matrix<T>,
    pub g_s: Matrix<T>,
}

/// Chain rule through `W = U S Vᵀ`: `∇_U = ∇_W V Sᵀ`, `∇_V = ∇_Wᵀ U S`, `∇_S = Uᵀ ∇_W V`.
pub fn factor_gradients<T: Scalar, M: LossModel<T> + ?Sized>(
    factors: &LowRankFactors<T>,
    model: &M,
) -> Result<FactorGradients<T>> {
    ensure_dims(factors.dim() == model.dim(), || {
        format!("factors of dimension {} for a model of dimension {}", factors.dim(), model.dim())
    })?;
    let (u, s, v) = (&factors.u, &factors.s, &factors.v);
    let w = u.matmul(s)?.matmul_t(v)?;
    let gw = model.weight_gradient(&w);
    let gw_v = gw.matmul(v)?;
    let g_u = gw_v.matmul_t(s)?;
    let g_v = gw.t_matmul(u)?.matmul(s)?;
    let g_s = u.t_matmul(&gw_v)?;
    Ok(FactorGradients { g_u, g_v, g_s })
}

/// `Ũᵀ ∇_W L(Ũ S̃ Ṽᵀ) Ṽ`, evaluated through the full weight gradient.
pub fn coefficient_gradient<T: Scalar, M: LossModel<T> + ?Sized>(
    state: &AugmentedState<T>,
    model: &M,
) -> Result<Matrix<T>> {
    ensure_dims(state.u_aug.rows() == model.dim(), || {
        format!("augmented basis with {} rows for model of dimension {}", state.u_aug.rows(), model.dim())
    })?;
    let gw = model.weight_gradient(&state.reconstruct());
    state.u_aug.t_matmul(&gw)?.matmul(&state.v_aug)
}

/// Power-iteration estimate of the largest Hessian eigenvalue, i.e. the
/// smoothness constant of a quadratic loss.
pub fn estimate_smoothness<T: Scalar, M: LossModel<T> + ?Sized>(model: &M, iters: usize, seed: u64) -> Result<T> {
    let n = model.dim();
    spectral_norm(|dw: &Matrix<T>| model.hessian_apply(dw), (n, n), iters, seed)
}
