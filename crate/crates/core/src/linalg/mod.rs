//! Dense small-matrix kernels.

mod cholesky;
mod matrix;
mod power;
mod qr;
mod svd;

pub use cholesky::cholesky_solve;
pub use matrix::Matrix;
pub use power::spectral_norm;
pub use qr::{qr_thin, RANK_TOL};
pub use svd::{svd_square, Svd};
