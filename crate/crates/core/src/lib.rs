//! Federated dynamical low-rank training.
//!
//! Clients share a factorized weight `W = U S Vᵀ`. Each round the server
//! augments both bases with aggregated gradient directions, clients train
//! only the small augmented coefficient matrix, and the server compresses the
//! averaged coefficients back to an adaptive rank. Full-rank FedAvg and FedLin
//! run on the same losses for comparison.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the precision.

pub mod error;
pub mod federation;
pub mod linalg;
pub mod losses;
pub mod lowrank;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Factors64 = lowrank::LowRankFactors<f64>;
pub type Factors32 = lowrank::LowRankFactors<f32>;
pub type LeastSquares64 = losses::LeastSquares<f64>;
pub type LeastSquares32 = losses::LeastSquares<f32>;
pub type Problem64 = losses::LlsProblem<f64>;
pub type Problem32 = losses::LlsProblem<f32>;
