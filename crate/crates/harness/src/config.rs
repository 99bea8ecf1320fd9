//! Experiment configuration: a flat TOML document, overridable field by field.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedlrt_core::federation::{Algorithm, FederationConfig, VarianceMode};
use fedlrt_core::losses::FeatureBasis;
use fedlrt_core::lowrank::TruncationConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// One realizable low-rank target, data sharded across clients.
    Homogeneous,
    /// Shared data, a different rank-1 target per client.
    Heterogeneous,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Homogeneous => "homogeneous",
            Experiment::Heterogeneous => "heterogeneous",
        })
    }
}

/// Every configurable field, all optional. Used for the TOML file, for
/// command-line overrides and for the record stored next to the metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<Experiment>,
    pub algorithm: Option<String>,
    pub basis: Option<String>,
    pub n: Option<usize>,
    pub r_target: Option<usize>,
    pub samples: Option<usize>,
    pub clients: Option<usize>,
    pub local_iters: Option<usize>,
    pub lr: Option<f64>,
    pub tau: Option<f64>,
    pub rank_init: Option<usize>,
    pub r_min: Option<usize>,
    pub r_max: Option<usize>,
    pub rounds: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those of `self`.
    pub fn overlay(self, over: ConfigOverrides) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            experiment, algorithm, basis, n, r_target, samples, clients, local_iters, lr, tau, rank_init, r_min,
            r_max, rounds, seeds, out
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub algorithm: Algorithm,
    pub basis: FeatureBasis,
    pub n: usize,
    pub r_target: usize,
    pub samples: usize,
    pub clients: usize,
    pub local_iters: usize,
    pub lr: f64,
    pub tau: f64,
    pub rank_init: usize,
    pub r_min: usize,
    pub r_max: usize,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

pub const DEFAULT_SEED_COUNT: u64 = 20;

fn parse<T: FromStr<Err = fedlrt_core::Error>>(s: &str) -> Result<T> {
    s.parse().map_err(|e: fedlrt_core::Error| HarnessError::Config(e.to_string()))
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let (n, r_target, local_iters, rounds) = match experiment {
            Experiment::Homogeneous => (20, 4, 20, 2000),
            Experiment::Heterogeneous => (10, 1, 100, 300),
        };
        Self {
            experiment,
            algorithm: Algorithm::FedLrt(VarianceMode::Full),
            basis: FeatureBasis::Orthonormal,
            n,
            r_target,
            samples: 10_000,
            clients: 4,
            local_iters,
            lr: 1e-3,
            tau: 0.1,
            rank_init: n.div_ceil(2),
            r_min: 1,
            r_max: n,
            rounds,
            seeds: (0..DEFAULT_SEED_COUNT).collect(),
            out: PathBuf::from("metrics.csv"),
        }
    }

    /// Experiment defaults, then `fields`. Rank defaults follow a changed `n`.
    pub fn resolve(fields: ConfigOverrides) -> Result<Self> {
        let mut cfg = Self::defaults(fields.experiment.unwrap_or(Experiment::Homogeneous));
        if let Some(a) = &fields.algorithm {
            cfg.algorithm = parse(a)?;
        }
        if let Some(b) = &fields.basis {
            cfg.basis = parse(b)?;
        }
        if let Some(n) = fields.n {
            cfg.n = n;
            cfg.rank_init = n.div_ceil(2);
            cfg.r_max = n;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = fields.$f { cfg.$f = v; })* };
        }
        set!(r_target, samples, clients, local_iters, lr, tau, rank_init, r_min, r_max, rounds);
        if let Some(seeds) = fields.seeds {
            cfg.seeds = seeds;
        }
        if let Some(out) = fields.out {
            cfg.out = out;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// File values (if any) overlaid by command-line values.
    pub fn load(file: Option<&Path>, flags: ConfigOverrides) -> Result<Self> {
        let base = match file {
            Some(path) => ConfigOverrides::from_file(path)?,
            None => ConfigOverrides::default(),
        };
        Self::resolve(base.overlay(flags))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.n == 0 {
            return fail("n must be positive".into());
        }
        if self.r_target == 0 || self.r_target > self.n {
            return fail(format!("r_target must lie in [1, n={}], got {}", self.n, self.r_target));
        }
        if self.clients == 0 || self.samples < self.clients {
            return fail(format!("need 1 <= clients <= samples, got {} and {}", self.clients, self.samples));
        }
        if self.local_iters == 0 {
            return fail("local_iters must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr must be positive and finite, got {}", self.lr));
        }
        if self.rank_init == 0 || self.rank_init > self.n {
            return fail(format!("rank_init must lie in [1, n={}], got {}", self.n, self.rank_init));
        }
        if self.r_max > self.n {
            return fail(format!("r_max {} exceeds n={}", self.r_max, self.n));
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        self.truncation()?;
        Ok(())
    }

    pub fn truncation(&self) -> Result<TruncationConfig> {
        TruncationConfig::new(self.tau, self.r_min, self.r_max).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn federation(&self, seed: u64) -> Result<FederationConfig> {
        let variance_mode = match self.algorithm {
            Algorithm::FedLrt(mode) => mode,
            _ => VarianceMode::None,
        };
        Ok(FederationConfig {
            clients: self.clients,
            local_iters: self.local_iters,
            lr: self.lr,
            rounds: self.rounds,
            variance_mode,
            truncation: self.truncation()?,
            seed,
        })
    }

    /// Fully populated record; resolving it reproduces this configuration.
    pub fn record(&self) -> ConfigOverrides {
        ConfigOverrides {
            experiment: Some(self.experiment),
            algorithm: Some(self.algorithm.tag().to_string()),
            basis: Some(self.basis.tag().to_string()),
            n: Some(self.n),
            r_target: Some(self.r_target),
            samples: Some(self.samples),
            clients: Some(self.clients),
            local_iters: Some(self.local_iters),
            lr: Some(self.lr),
            tau: Some(self.tau),
            rank_init: Some(self.rank_init),
            r_min: Some(self.r_min),
            r_max: Some(self.r_max),
            rounds: Some(self.rounds),
            seeds: Some(self.seeds.clone()),
            out: Some(self.out.clone()),
        }
    }
}
