//! Federated round drivers over an in-process broadcast/aggregate protocol
//! with exact communication metering.

mod driver;
mod ledger;
mod rounds;

pub use driver::{run, ModelState, RoundTrace, Simulation};
pub use ledger::{ledger_expected_floats, naive_expected_floats, CommLedger, FloatCount};
pub use rounds::{
    fedavg_round, fedlin_round, fedlrt_round, fedlrt_simplified_round, naive_fedlrt_round, DenseRound,
    LowRankRound,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::lowrank::TruncationConfig;

/// Variance correction applied to the client coefficient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarianceMode {
    None,
    /// Correct the whole augmented coefficient matrix (one extra communication round).
    Full,
    /// Correct only the leading `r x r` block, reusing the basis-gradient round.
    Simplified,
}

/// The federated training schemes this crate simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    FedAvg,
    FedLin,
    FedLrt(VarianceMode),
    /// Each client augments and truncates its own factors; the server averages
    /// dense reconstructions.
    NaiveFedLrt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::FedAvg,
        Algorithm::FedLin,
        Algorithm::FedLrt(VarianceMode::None),
        Algorithm::FedLrt(VarianceMode::Full),
        Algorithm::FedLrt(VarianceMode::Simplified),
        Algorithm::NaiveFedLrt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedLin => "fedlin",
            Algorithm::FedLrt(VarianceMode::None) => "fedlrt-none",
            Algorithm::FedLrt(VarianceMode::Full) => "fedlrt-full",
            Algorithm::FedLrt(VarianceMode::Simplified) => "fedlrt-simplified",
            Algorithm::NaiveFedLrt => "fedlrt-naive",
        }
    }

    pub fn is_low_rank(self) -> bool {
        matches!(self, Algorithm::FedLrt(_) | Algorithm::NaiveFedLrt)
    }

    /// Aggregation steps per round.
    pub fn comm_rounds(self) -> u64 {
        match self {
            Algorithm::FedAvg | Algorithm::NaiveFedLrt => 1,
            Algorithm::FedLin | Algorithm::FedLrt(VarianceMode::None | VarianceMode::Simplified) => 2,
            Algorithm::FedLrt(VarianceMode::Full) => 3,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Algorithm::ALL.iter().map(|a| a.tag()).collect();
                Error::Argument(format!("unknown algorithm '{s}', expected one of {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederationConfig {
    pub clients: usize,
    /// Local iterations `s*` per round.
    pub local_iters: usize,
    /// Local learning rate `λ`.
    pub lr: f64,
    pub rounds: usize,
    pub variance_mode: VarianceMode,
    pub truncation: TruncationConfig,
    pub seed: u64,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.clients >= 1, || "need at least one client".into())?;
        ensure(self.local_iters >= 1, || "need at least one local iteration".into())?;
        ensure(self.lr.is_finite() && self.lr >= 0.0, || {
            format!("learning rate must be finite and non-negative, got {}", self.lr)
        })?;
        self.truncation.validate()
    }
}
