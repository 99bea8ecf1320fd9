//! Runtime checks of the client-drift bound and the per-round loss-descent bound.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use fedlrt_core::federation::{Algorithm, VarianceMode};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::metrics::{artifacts_path, read_metrics, RunArtifacts};

/// Power iteration approaches the top eigenvalue from below; inflate before use.
pub const SMOOTHNESS_SAFETY: f64 = 1.05;
/// Absolute slack on both inequalities.
pub const SLACK: f64 = 1e-9;

/// `e · s* · λ · ‖∇_S̃ L‖_F + slack`.
pub fn drift_bound(lr: f64, local_iters: usize, grad_norm: f64) -> f64 {
    std::f64::consts::E * local_iters as f64 * lr * grad_norm + SLACK
}

/// `−s* λ (1 − 12 s* λ L̂) ‖∇_S̃ L‖² + L̂ ϑ + slack`.
pub fn descent_bound(lr: f64, local_iters: usize, smoothness: f64, grad_norm: f64, theta: f64) -> f64 {
    let sl = local_iters as f64 * lr;
    -sl * (1.0 - 12.0 * sl * smoothness) * grad_norm * grad_norm + smoothness * theta + SLACK
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub max_drift: f64,
    pub grad_norm: f64,
    pub theta: f64,
}

/// Everything the checks need from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedInputs {
    pub seed: u64,
    pub lr: f64,
    pub local_iters: usize,
    /// Raw estimate; [`SMOOTHNESS_SAFETY`] is applied by the checker.
    pub smoothness: f64,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Applicable,
    NotApplicable(String),
}

impl Gate {
    pub fn is_applicable(&self) -> bool {
        matches!(self, Gate::Applicable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundCheck {
    pub seed: u64,
    pub t: usize,
    pub drift: Option<Inequality>,
    pub descent: Option<Inequality>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    /// Smoothness after the safety factor.
    pub smoothness: f64,
    pub drift_gate: Gate,
    pub descent_gate: Gate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub seeds: Vec<SeedReport>,
    pub rounds: Vec<RoundCheck>,
}

impl TheoremReport {
    pub fn drift_violations(&self) -> usize {
        self.rounds.iter().filter(|r| r.drift.is_some_and(|i| !i.holds())).count()
    }

    pub fn descent_violations(&self) -> usize {
        self.rounds.iter().filter(|r| r.descent.is_some_and(|i| !i.holds())).count()
    }

    pub fn checked(&self) -> usize {
        self.rounds.iter().map(|r| r.drift.is_some() as usize + r.descent.is_some() as usize).sum()
    }

    pub fn verdict(&self) -> Verdict {
        if self.drift_violations() + self.descent_violations() > 0 {
            Verdict::Violated
        } else if self.checked() == 0 {
            Verdict::NotApplicable
        } else {
            Verdict::Pass
        }
    }
}

fn gate(lr: f64, limit: f64, what: &str) -> Gate {
    if lr <= limit {
        Gate::Applicable
    } else {
        Gate::NotApplicable(format!("lr {lr:e} exceeds the {what} step-size limit {limit:e}"))
    }
}

/// Checks every round whose step-size precondition holds. With `force`, the
/// inequalities are evaluated regardless of the preconditions.
pub fn check_seeds(inputs: &[SeedInputs], force: bool) -> TheoremReport {
    let mut seeds = Vec::with_capacity(inputs.len());
    let mut rounds = Vec::new();
    for input in inputs {
        let lhat = SMOOTHNESS_SAFETY * input.smoothness;
        let s = input.local_iters as f64;
        let drift_gate = gate(input.lr, 1.0 / (lhat * s), "drift");
        let descent_gate = gate(input.lr, 1.0 / (12.0 * lhat * s), "descent");
        for r in &input.rounds {
            let drift = (force || drift_gate.is_applicable()).then(|| Inequality {
                lhs: r.max_drift,
                rhs: drift_bound(input.lr, input.local_iters, r.grad_norm),
            });
            let descent = (force || descent_gate.is_applicable()).then(|| Inequality {
                lhs: r.loss_after - r.loss_before,
                rhs: descent_bound(input.lr, input.local_iters, lhat, r.grad_norm, r.theta),
            });
            rounds.push(RoundCheck {
                seed: input.seed,
                t: r.t,
                drift,
                descent,
            });
        }
        seeds.push(SeedReport {
            seed: input.seed,
            smoothness: lhat,
            drift_gate,
            descent_gate,
        });
    }
    TheoremReport { seeds, rounds }
}

/// Rebuilds per-seed inputs from a metrics file and its artifacts.
pub fn load_inputs(metrics: &Path) -> Result<(ExperimentConfig, Vec<SeedInputs>)> {
    let rows = read_metrics(metrics)?;
    let artifacts = RunArtifacts::read(&artifacts_path(metrics))?;
    let cfg = ExperimentConfig::resolve(artifacts.config.clone())?;
    let mut by_seed: HashMap<u64, Vec<_>> = HashMap::new();
    for row in rows {
        by_seed.entry(row.seed).or_default().push(row);
    }
    let mut inputs = Vec::new();
    for seed in &artifacts.seeds {
        let rows = by_seed.remove(&seed.seed).unwrap_or_default();
        if rows.len() != seed.rounds.len() {
            return Err(HarnessError::Schema(format!(
                "seed {} has {} metric rows but {} artifact rounds",
                seed.seed,
                rows.len(),
                seed.rounds.len()
            )));
        }
        let rounds = rows
            .iter()
            .zip(&seed.rounds)
            .map(|(row, art)| {
                if row.t != art.t {
                    return Err(HarnessError::Schema(format!("seed {} round order differs", seed.seed)));
                }
                Ok(RoundRecord {
                    t: row.t,
                    loss_before: art.loss_before,
                    loss_after: row.global_loss,
                    max_drift: row.max_drift,
                    grad_norm: row.grad_norm,
                    theta: art.theta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        inputs.push(SeedInputs {
            seed: seed.seed,
            lr: cfg.lr,
            local_iters: cfg.local_iters,
            smoothness: seed.smoothness,
            rounds,
        });
    }
    Ok((cfg, inputs))
}

/// Checks a completed run. Only runs with full variance correction are in scope;
/// anything else yields a report without applicable checks.
pub fn check_theorems(metrics: &Path) -> Result<TheoremReport> {
    let (cfg, inputs) = load_inputs(metrics)?;
    if cfg.algorithm != Algorithm::FedLrt(VarianceMode::Full) {
        let reason = format!("algorithm {} has no full variance correction", cfg.algorithm);
        return Ok(TheoremReport {
            seeds: inputs
                .iter()
                .map(|i| SeedReport {
                    seed: i.seed,
                    smoothness: SMOOTHNESS_SAFETY * i.smoothness,
                    drift_gate: Gate::NotApplicable(reason.clone()),
                    descent_gate: Gate::NotApplicable(reason.clone()),
                })
                .collect(),
            rounds: Vec::new(),
        });
    }
    Ok(check_seeds(&inputs, false))
}

fn mark(i: &Option<Inequality>) -> String {
    match i {
        None => "n/a".into(),
        Some(i) => format!(
            "{} ({:.6e} <= {:.6e})",
            if i.holds() { "pass" } else { "FAIL" },
            i.lhs,
            i.rhs
        ),
    }
}

impl fmt::Display for TheoremReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.seeds {
            let g = |gate: &Gate| match gate {
                Gate::Applicable => "applicable".to_string(),
                Gate::NotApplicable(why) => format!("not applicable: {why}"),
            };
            writeln!(
                f,
                "seed {}: L = {:.6e}; drift {}; descent {}",
                s.seed,
                s.smoothness,
                g(&s.drift_gate),
                g(&s.descent_gate)
            )?;
        }
        for r in &self.rounds {
            writeln!(f, "seed {} round {}: drift {}; descent {}", r.seed, r.t, mark(&r.drift), mark(&r.descent))?;
        }
        let verdict = match self.verdict() {
            Verdict::Pass => "PASS".to_string(),
            Verdict::Violated => format!(
                "VIOLATED ({} drift, {} descent violations)",
                self.drift_violations(),
                self.descent_violations()
            ),
            Verdict::NotApplicable => "not applicable".to_string(),
        };
        write!(f, "verdict: {verdict} ({} inequalities checked)", self.checked())
    }
}
