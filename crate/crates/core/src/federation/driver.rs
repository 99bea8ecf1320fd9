use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::LossModel;
use crate::lowrank::{reconstruct, LowRankFactors};
use crate::scalar::Scalar;

use super::rounds::{fedavg_round, fedlin_round, fedlrt_round, naive_fedlrt_round};
use super::{Algorithm, CommLedger, FederationConfig, FloatCount};

/// The global model as the server holds it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelState<T> {
    Dense(Matrix<T>),
    LowRank(LowRankFactors<T>),
}

impl<T: Scalar> ModelState<T> {
    pub fn weights(&self) -> Matrix<T> {
        match self {
            ModelState::Dense(w) => w.clone(),
            ModelState::LowRank(f) => reconstruct(f),
        }
    }

    /// Factor rank, or the dimension for dense models.
    pub fn rank(&self) -> usize {
        match self {
            ModelState::Dense(w) => w.rows(),
            ModelState::LowRank(f) => f.rank(),
        }
    }
}

/// Metrics of one completed aggregation round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace<T> {
    /// One-based round index.
    pub t: usize,
    pub rank_before: usize,
    pub rank: usize,
    pub loss_before: T,
    pub global_loss: T,
    pub dist_to_oracle: Option<T>,
    pub max_drift: T,
    pub grad_norm: T,
    /// Truncation threshold; zero for dense schemes.
    pub theta: T,
    pub tail_norm: T,
    pub degenerate: bool,
    pub aggregate_rank: Option<usize>,
    pub client_ranks: Vec<usize>,
    pub comm: FloatCount,
    pub comm_cumulative: FloatCount,
}

/// Round-by-round execution of one algorithm on a fixed set of clients.
pub struct Simulation<'a, T: Scalar, M> {
    algorithm: Algorithm,
    cfg: FederationConfig,
    clients: &'a [M],
    state: ModelState<T>,
    ledger: CommLedger,
    oracle: Option<Matrix<T>>,
    loss: T,
    t: usize,
}

fn global_loss<T: Scalar, M: LossModel<T>>(clients: &[M], w: &Matrix<T>) -> T {
    let losses: Vec<T> = clients.par_iter().map(|m| m.loss(w)).collect();
    losses.into_iter().sum::<T>() / T::of(clients.len() as f64)
}

impl<'a, T: Scalar, M: LossModel<T>> Simulation<'a, T, M> {
    /// Starts from `init`; dense schemes start from its reconstruction so every
    /// algorithm sees the same initial weights. The variance mode of a FeDLRT
    /// algorithm overrides `cfg.variance_mode`.
    pub fn new(
        algorithm: Algorithm,
        cfg: FederationConfig,
        clients: &'a [M],
        init: &LowRankFactors<T>,
        oracle: Option<Matrix<T>>,
    ) -> Result<Self> {
        cfg.validate()?;
        init.validate()?;
        let mut cfg = cfg;
        if let Algorithm::FedLrt(mode) = algorithm {
            cfg.variance_mode = mode;
        }
        let state = if algorithm.is_low_rank() {
            ModelState::LowRank(init.clone())
        } else {
            ModelState::Dense(reconstruct(init))
        };
        let loss = global_loss(clients, &state.weights());
        Ok(Self {
            algorithm,
            cfg,
            clients,
            state,
            ledger: CommLedger::new(),
            oracle,
            loss,
            t: 0,
        })
    }

    pub fn state(&self) -> &ModelState<T> {
        &self.state
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn loss(&self) -> T {
        self.loss
    }

    pub fn rounds_done(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> &FederationConfig {
        &self.cfg
    }

    /// Executes one round. A non-finite result leaves the simulation unchanged.
    pub fn step(&mut self) -> Result<RoundTrace<T>> {
        let rank_before = self.state.rank();
        let mut ledger = self.ledger.clone();
        let (state, max_drift, grad_norm, theta, tail_norm, degenerate, aggregate_rank, client_ranks) =
            match (&self.state, self.algorithm) {
                (ModelState::Dense(w), Algorithm::FedAvg | Algorithm::FedLin) => {
                    let out = if self.algorithm == Algorithm::FedAvg {
                        fedavg_round(w, &self.cfg, self.clients, &mut ledger)?
                    } else {
                        fedlin_round(w, &self.cfg, self.clients, &mut ledger)?
                    };
                    (
                        ModelState::Dense(out.weights),
                        out.max_drift,
                        out.grad_norm,
                        T::zero(),
                        T::zero(),
                        false,
                        None,
                        Vec::new(),
                    )
                }
                (ModelState::LowRank(f), Algorithm::FedLrt(_) | Algorithm::NaiveFedLrt) => {
                    let out = if self.algorithm == Algorithm::NaiveFedLrt {
                        naive_fedlrt_round(f, &self.cfg, self.clients, &mut ledger)?
                    } else {
                        fedlrt_round(f, &self.cfg, self.clients, &mut ledger)?
                    };
                    (
                        ModelState::LowRank(out.factors),
                        out.max_drift,
                        out.grad_norm,
                        out.theta,
                        out.tail_norm,
                        out.degenerate,
                        out.aggregate_rank,
                        out.client_ranks,
                    )
                }
                _ => unreachable!("model state always matches the algorithm"),
            };

        let w = state.weights();
        let loss = global_loss(self.clients, &w);
        let dist = self.oracle.as_ref().map(|o| (&w - o).frobenius_norm());
        let finite = w.is_finite()
            && loss.is_finite()
            && max_drift.is_finite()
            && grad_norm.is_finite()
            && dist.is_none_or(|d| d.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!(
                "{} produced non-finite values in round {}",
                self.algorithm,
                self.t + 1
            )));
        }

        let comm = ledger.finish_round();
        self.ledger = ledger;
        self.t += 1;
        let trace = RoundTrace {
            t: self.t,
            rank_before,
            rank: state.rank(),
            loss_before: self.loss,
            global_loss: loss,
            dist_to_oracle: dist,
            max_drift,
            grad_norm,
            theta,
            tail_norm,
            degenerate,
            aggregate_rank,
            client_ranks,
            comm,
            comm_cumulative: self.ledger.cumulative(),
        };
        self.state = state;
        self.loss = loss;
        Ok(trace)
    }
}

/// Runs `cfg.rounds` rounds and returns the final state and every trace.
pub fn run<T: Scalar, M: LossModel<T>>(
    algorithm: Algorithm,
    cfg: FederationConfig,
    clients: &[M],
    init: &LowRankFactors<T>,
    oracle: Option<Matrix<T>>,
) -> Result<(ModelState<T>, Vec<RoundTrace<T>>)> {
    let mut sim = Simulation::new(algorithm, cfg, clients, init, oracle)?;
    let traces = (0..cfg.rounds).map(|_| sim.step()).collect::<Result<Vec<_>>>()?;
    Ok((sim.state, traces))
}
