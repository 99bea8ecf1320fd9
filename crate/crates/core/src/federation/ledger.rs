use std::ops::AddAssign;

use crate::error::{ensure, Result};
use crate::linalg::Matrix;
use crate::lowrank::augmented_width;
use crate::scalar::Scalar;

use super::{Algorithm, VarianceMode};

/// Scalars moved in each direction plus the number of synchronization rounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FloatCount {
    /// Server to clients, counted once per broadcast payload.
    pub down: u64,
    /// Clients to server, counted per client.
    pub up: u64,
    /// Aggregation points.
    pub rounds: u64,
}

impl FloatCount {
    pub fn total(&self) -> u64 {
        self.down + self.up
    }
}

impl AddAssign for FloatCount {
    fn add_assign(&mut self, rhs: Self) {
        self.down += rhs.down;
        self.up += rhs.up;
        self.rounds += rhs.rounds;
    }
}

/// Meters every payload of a simulation. Only the coordinator writes to it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    current: FloatCount,
    cumulative: FloatCount,
    history: Vec<FloatCount>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// One payload sent to every client.
    pub fn broadcast<T: Scalar>(&mut self, payload: &[&Matrix<T>]) {
        let len: usize = payload.iter().map(|m| m.rows() * m.cols()).sum();
        self.current.down += len as u64;
    }

    /// Each client uploads one payload of the given per-client size.
    pub fn aggregate<T: Scalar>(&mut self, per_client: &[&Matrix<T>], clients: usize) {
        let len: usize = per_client.iter().map(|m| m.rows() * m.cols()).sum();
        self.aggregate_sizes(&vec![len; clients]);
    }

    /// Clients upload payloads of differing sizes within one aggregation.
    pub fn aggregate_sizes(&mut self, sizes: &[usize]) {
        self.current.up += sizes.iter().map(|&s| s as u64).sum::<u64>();
        self.current.rounds += 1;
    }

    /// Closes the current round and returns its counts.
    pub fn finish_round(&mut self) -> FloatCount {
        let done = std::mem::take(&mut self.current);
        self.cumulative += done;
        self.history.push(done);
        done
    }

    /// Counts accumulated since the last [`finish_round`](Self::finish_round).
    pub fn pending(&self) -> FloatCount {
        self.current
    }

    pub fn cumulative(&self) -> FloatCount {
        self.cumulative
    }

    pub fn history(&self) -> &[FloatCount] {
        &self.history
    }
}

/// Exact per-round communication of `algorithm` at dimension `n`, rank `r`
/// (the rank at the start of the round) and `clients` participants.
///
/// The naive scheme's upload depends on every client's truncated rank; here
/// all clients are assumed to return rank `r`. See [`naive_expected_floats`].
pub fn ledger_expected_floats(algorithm: Algorithm, n: usize, r: usize, clients: usize) -> Result<FloatCount> {
    ensure(n >= 1 && clients >= 1, || format!("invalid shape n={n}, clients={clients}"))?;
    if algorithm.is_low_rank() {
        ensure(r >= 1 && r <= n, || format!("rank {r} outside [1, {n}]"))?;
    }
    let (n64, r64, c) = (n as u64, r as u64, clients as u64);
    let k = augmented_width(n, r) as u64;
    let factors = 2 * n64 * r64 + r64 * r64;
    let dense = n64 * n64;
    let count = match algorithm {
        Algorithm::FedAvg => FloatCount {
            down: dense,
            up: c * dense,
            rounds: 1,
        },
        Algorithm::FedLin => FloatCount {
            down: 2 * dense,
            up: 2 * c * dense,
            rounds: 2,
        },
        Algorithm::FedLrt(mode) => {
            // factors, then the new basis directions
            let mut down = factors + 2 * n64 * (k - r64);
            // basis gradients, then augmented coefficients
            let mut up = c * (2 * n64 * r64 + k * k);
            match mode {
                VarianceMode::None => {}
                VarianceMode::Simplified => {
                    up += c * r64 * r64;
                    down += r64 * r64;
                }
                VarianceMode::Full => {
                    up += c * k * k;
                    down += k * k;
                }
            }
            FloatCount {
                down,
                up,
                rounds: algorithm.comm_rounds(),
            }
        }
        Algorithm::NaiveFedLrt => return naive_expected_floats(n, r, &vec![r; clients]),
    };
    Ok(count)
}

/// Naive scheme: global factors down, each client's own truncated factors up.
pub fn naive_expected_floats(n: usize, r: usize, client_ranks: &[usize]) -> Result<FloatCount> {
    ensure(!client_ranks.is_empty(), || "no clients".into())?;
    let factors = |r: usize| (2 * n * r + r * r) as u64;
    Ok(FloatCount {
        down: factors(r),
        up: client_ranks.iter().map(|&rc| factors(rc)).sum(),
        rounds: 1,
    })
}
