//! Experiment orchestration for federated low-rank training: configuration,
//! seeded runs, metrics files, theorem checks and cross-run summaries.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod summary;
pub mod theorems;

pub use config::{ConfigOverrides, Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{execute, run_experiment, run_seed, RunOutput, SeedRun};
pub use metrics::{read_metrics, MetricsRow, RunArtifacts};
pub use summary::{compare_summary, SummaryRow};
pub use theorems::{check_theorems, TheoremReport, Verdict};
