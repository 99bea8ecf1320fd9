use crate::linalg::Matrix;
use crate::losses::LossModel;
use crate::scalar::Scalar;

/// `½ Σ h_ij (W_ij − M_ij)²` with positive curvatures `h`; minimizer `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQuadratic<T> {
    pub curvature: Matrix<T>,
    pub center: Matrix<T>,
}

impl<T: Scalar> DiagonalQuadratic<T> {
    pub fn new(curvature: Matrix<T>, center: Matrix<T>) -> Self {
        assert!(curvature.is_square() && curvature.shape() == center.shape());
        Self { curvature, center }
    }

    /// Uniform curvature `h` around `center`.
    pub fn isotropic(h: T, center: Matrix<T>) -> Self {
        let (r, c) = center.shape();
        Self::new(Matrix::from_fn(r, c, |_, _| h), center)
    }

    fn weighted(&self, m: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(m.rows(), m.cols(), |i, j| self.curvature[(i, j)] * m[(i, j)])
    }
}

impl<T: Scalar> LossModel<T> for DiagonalQuadratic<T> {
    fn dim(&self) -> usize {
        self.center.rows()
    }

    fn loss(&self, w: &Matrix<T>) -> T {
        let d = w - &self.center;
        self.weighted(&d).dot(&d) / T::of(2.0)
    }

    fn weight_gradient(&self, w: &Matrix<T>) -> Matrix<T> {
        self.weighted(&(w - &self.center))
    }

    fn hessian_apply(&self, dw: &Matrix<T>) -> Matrix<T> {
        self.weighted(dw)
    }
}
