//! Per-round metrics CSV and the JSON run artifacts stored beside it.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ConfigOverrides;
use crate::error::{HarnessError, Result};

/// Column names, in file order.
pub const METRICS_HEADER: [&str; 13] = [
    "algorithm",
    "clients",
    "seed",
    "t",
    "rank",
    "global_loss",
    "excess_loss",
    "dist_to_oracle",
    "max_drift",
    "grad_norm",
    "floats_down",
    "floats_up",
    "comm_rounds_cum",
];

/// One row per (seed, round). Float counts are per round; communication
/// rounds are cumulative.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub algorithm: String,
    pub clients: usize,
    pub seed: u64,
    pub t: usize,
    pub rank: usize,
    pub global_loss: f64,
    /// `global_loss − L(W*)`.
    pub excess_loss: f64,
    pub dist_to_oracle: f64,
    pub max_drift: f64,
    pub grad_norm: f64,
    pub floats_down: u64,
    pub floats_up: u64,
    pub comm_rounds_cum: u64,
}

/// 17 significant digits: enough to read every `f64` back exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl MetricsRow {
    fn fields(&self) -> [String; 13] {
        [
            self.algorithm.clone(),
            self.clients.to_string(),
            self.seed.to_string(),
            self.t.to_string(),
            self.rank.to_string(),
            format_float(self.global_loss),
            format_float(self.excess_loss),
            format_float(self.dist_to_oracle),
            format_float(self.max_drift),
            format_float(self.grad_norm),
            self.floats_down.to_string(),
            self.floats_up.to_string(),
            self.comm_rounds_cum.to_string(),
        ]
    }

    fn parse(record: &csv::StringRecord) -> std::result::Result<Self, String> {
        fn get<T: std::str::FromStr>(r: &csv::StringRecord, i: usize) -> std::result::Result<T, String> {
            let raw = r.get(i).ok_or_else(|| format!("missing column {}", METRICS_HEADER[i]))?;
            raw.parse()
                .map_err(|_| format!("bad value '{raw}' in column {}", METRICS_HEADER[i]))
        }
        Ok(Self {
            algorithm: get(record, 0)?,
            clients: get(record, 1)?,
            seed: get(record, 2)?,
            t: get(record, 3)?,
            rank: get(record, 4)?,
            global_loss: get(record, 5)?,
            excess_loss: get(record, 6)?,
            dist_to_oracle: get(record, 7)?,
            max_drift: get(record, 8)?,
            grad_norm: get(record, 9)?,
            floats_down: get(record, 10)?,
            floats_up: get(record, 11)?,
            comm_rounds_cum: get(record, 12)?,
        })
    }
}

/// Writes `bytes` to a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Format {
        path: PathBuf::from("<metrics>"),
        msg: e.to_string(),
    };
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.fields()).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::format("<metrics>", e))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_atomic(path, &metrics_csv(rows)?)
}

/// Reads a metrics file, rejecting any header other than [`METRICS_HEADER`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::format(path, e))?;
    let header = reader.headers().map_err(|e| HarnessError::format(path, e))?.clone();
    if !header.iter().eq(METRICS_HEADER.iter().copied()) {
        return Err(HarnessError::Schema(format!(
            "{} has columns [{}], expected [{}]",
            path.display(),
            header.iter().collect::<Vec<_>>().join(","),
            METRICS_HEADER.join(",")
        )));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| HarnessError::format(path, e))?;
            MetricsRow::parse(&rec).map_err(|msg| HarnessError::format(path, msg))
        })
        .collect()
}

/// Where the artifacts of the metrics file `metrics` live.
pub fn artifacts_path(metrics: &Path) -> PathBuf {
    let mut name = metrics.as_os_str().to_owned();
    name.push(".artifacts.json");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SeedStatus {
    Completed,
    Failed { round: usize, message: String },
}

/// Per-round values the CSV does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundArtifacts {
    pub t: usize,
    pub rank_before: usize,
    pub loss_before: f64,
    pub theta: f64,
    pub tail_norm: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedArtifacts {
    pub seed: u64,
    #[serde(flatten)]
    pub status: SeedStatus,
    /// Largest client smoothness estimate, before any safety factor.
    pub smoothness: f64,
    pub initial_loss: f64,
    pub optimal_loss: f64,
    pub rounds: Vec<RoundArtifacts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub config: ConfigOverrides,
    pub seeds: Vec<SeedArtifacts>,
}

impl RunArtifacts {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_vec_pretty(self).map_err(|e| HarnessError::format(path, e))?;
        write_atomic(path, &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_slice(&text).map_err(|e| HarnessError::format(path, e))
    }

    pub fn failed_seeds(&self) -> Vec<u64> {
        self.seeds
            .iter()
            .filter(|s| matches!(s.status, SeedStatus::Failed { .. }))
            .map(|s| s.seed)
            .collect()
    }
}
