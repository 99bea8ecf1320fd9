//! Runs one configured experiment over all seeds.

use fedlrt_core::federation::{RoundTrace, Simulation};
use fedlrt_core::losses::{estimate_smoothness, heterogeneous, homogeneous, oracle_minimizer, LossModel};
use fedlrt_core::lowrank::init_factors;
use fedlrt_core::{Error, Matrix64, Problem64};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::metrics::{
    artifacts_path, write_metrics, MetricsRow, RoundArtifacts, RunArtifacts, SeedArtifacts, SeedStatus,
};

/// Power iterations behind each smoothness estimate.
pub const SMOOTHNESS_ITERS: usize = 500;

pub fn build_problem(cfg: &ExperimentConfig, seed: u64) -> Result<Problem64> {
    let problem = match cfg.experiment {
        Experiment::Homogeneous => homogeneous(cfg.n, cfg.r_target, cfg.samples, cfg.clients, cfg.basis, seed)?,
        Experiment::Heterogeneous => heterogeneous(cfg.n, cfg.samples, cfg.clients, cfg.basis, seed)?,
    };
    Ok(problem)
}

pub fn mean_loss(problem: &Problem64, w: &Matrix64) -> f64 {
    problem.clients.iter().map(|m| m.loss(w)).sum::<f64>() / problem.client_count() as f64
}

/// Largest smoothness estimate over the clients.
pub fn client_smoothness(problem: &Problem64, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for m in &problem.clients {
        worst = worst.max(estimate_smoothness(m, SMOOTHNESS_ITERS, seed)?);
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub rows: Vec<MetricsRow>,
    pub artifacts: SeedArtifacts,
    pub traces: Vec<RoundTrace<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRun>,
}

impl RunOutput {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.seeds.iter().flat_map(|s| s.rows.iter().cloned()).collect()
    }

    pub fn artifacts(&self) -> RunArtifacts {
        RunArtifacts {
            config: self.config.record(),
            seeds: self.seeds.iter().map(|s| s.artifacts.clone()).collect(),
        }
    }

    pub fn failed_seeds(&self) -> Vec<u64> {
        self.artifacts().failed_seeds()
    }
}

/// One seed: data, oracle, smoothness estimate, then the configured rounds.
/// A non-finite round stops the seed and marks it failed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let problem = build_problem(cfg, seed)?;
    let oracle = oracle_minimizer(&problem)?;
    let optimal_loss = mean_loss(&problem, &oracle);
    let smoothness = client_smoothness(&problem, seed)?;
    let init = init_factors::<f64>(cfg.n, cfg.rank_init, seed)?;
    let mut sim = Simulation::new(cfg.algorithm, cfg.federation(seed)?, &problem.clients, &init, Some(oracle))?;
    let initial_loss = sim.loss();

    let mut rows = Vec::with_capacity(cfg.rounds);
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut traces = Vec::with_capacity(cfg.rounds);
    let mut status = SeedStatus::Completed;
    for t in 1..=cfg.rounds {
        let trace = match sim.step() {
            Ok(trace) => trace,
            Err(Error::NonFinite(message)) => {
                status = SeedStatus::Failed { round: t, message };
                break;
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(MetricsRow {
            algorithm: cfg.algorithm.tag().to_string(),
            clients: cfg.clients,
            seed,
            t: trace.t,
            rank: trace.rank,
            global_loss: trace.global_loss,
            excess_loss: trace.global_loss - optimal_loss,
            dist_to_oracle: trace.dist_to_oracle.unwrap_or(f64::NAN),
            max_drift: trace.max_drift,
            grad_norm: trace.grad_norm,
            floats_down: trace.comm.down,
            floats_up: trace.comm.up,
            comm_rounds_cum: trace.comm_cumulative.rounds,
        });
        rounds.push(RoundArtifacts {
            t: trace.t,
            rank_before: trace.rank_before,
            loss_before: trace.loss_before,
            theta: trace.theta,
            tail_norm: trace.tail_norm,
            degenerate: trace.degenerate,
        });
        traces.push(trace);
    }
    Ok(SeedRun {
        rows,
        artifacts: SeedArtifacts {
            seed,
            status,
            smoothness,
            initial_loss,
            optimal_loss,
            rounds,
        },
        traces,
    })
}

/// All seeds (in parallel), results in the configured seed order.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seeds = cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect::<Result<Vec<_>>>()?;
    Ok(RunOutput {
        config: cfg.clone(),
        seeds,
    })
}

/// Executes `cfg` and writes the metrics file and its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let output = execute(cfg)?;
    write_metrics(&cfg.out, &output.rows())?;
    output.artifacts().write(&artifacts_path(&cfg.out))?;
    Ok(output)
}
