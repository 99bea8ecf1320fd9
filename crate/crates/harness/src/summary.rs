//! Cross-run comparison table: one row per (algorithm, client count).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::metrics::{format_float, read_metrics, write_atomic, MetricsRow};

/// Excess-loss level that counts as converged.
pub const LOSS_THRESHOLD: f64 = 1e-4;

pub const SUMMARY_HEADER: [&str; 7] = [
    "algorithm",
    "clients",
    "seeds",
    "median_final_loss",
    "median_final_excess_loss",
    "median_rounds_to_threshold",
    "median_cumulative_floats",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub clients: usize,
    pub seeds: usize,
    pub median_final_loss: f64,
    pub median_final_excess_loss: f64,
    /// `None` when the median seed never reached [`LOSS_THRESHOLD`].
    pub median_rounds_to_threshold: Option<f64>,
    pub median_cumulative_floats: f64,
}

/// Median; infinities are ordered last.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        let (a, b) = (values[mid - 1], values[mid]);
        if a.is_infinite() || b.is_infinite() {
            f64::INFINITY
        } else {
            0.5 * (a + b)
        }
    }
}

struct SeedSummary {
    final_loss: f64,
    final_excess: f64,
    rounds_to_threshold: f64,
    cumulative_floats: f64,
}

fn summarize_seed(rows: &[&MetricsRow]) -> SeedSummary {
    let last = rows.last().expect("seed with rows");
    SeedSummary {
        final_loss: last.global_loss,
        final_excess: last.excess_loss,
        rounds_to_threshold: rows
            .iter()
            .find(|r| r.excess_loss <= LOSS_THRESHOLD)
            .map_or(f64::INFINITY, |r| r.t as f64),
        cumulative_floats: rows.iter().map(|r| (r.floats_down + r.floats_up) as f64).sum(),
    }
}

/// Summarizes in-memory rows, grouped by (algorithm, clients) and then seed.
pub fn summarize_rows(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), BTreeMap<u64, Vec<&MetricsRow>>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.algorithm.clone(), row.clients))
            .or_default()
            .entry(row.seed)
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((algorithm, clients), seeds)| {
            let per_seed: Vec<SeedSummary> = seeds
                .into_values()
                .map(|mut rs| {
                    rs.sort_by_key(|r| r.t);
                    summarize_seed(&rs)
                })
                .collect();
            let pick = |f: fn(&SeedSummary) -> f64| median(&mut per_seed.iter().map(f).collect::<Vec<_>>());
            let rounds = pick(|s| s.rounds_to_threshold);
            SummaryRow {
                algorithm,
                clients,
                seeds: per_seed.len(),
                median_final_loss: pick(|s| s.final_loss),
                median_final_excess_loss: pick(|s| s.final_excess),
                median_rounds_to_threshold: rounds.is_finite().then_some(rounds),
                median_cumulative_floats: pick(|s| s.cumulative_floats),
            }
        })
        .collect()
}

/// Reads every metrics file (all must share the metrics schema) and summarizes them together.
pub fn compare_summary(paths: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    if paths.is_empty() {
        return Err(HarnessError::Config("no metrics files to summarize".into()));
    }
    let mut rows = Vec::new();
    for path in paths {
        rows.extend(read_metrics(path)?);
    }
    Ok(summarize_rows(&rows))
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::format("<summary>", e);
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.clients.to_string(),
            r.seeds.to_string(),
            format_float(r.median_final_loss),
            format_float(r.median_final_excess_loss),
            r.median_rounds_to_threshold
                .map_or_else(|| "not reached".to_string(), |v| v.to_string()),
            format_float(r.median_cumulative_floats),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| HarnessError::format("<summary>", e))
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_atomic(path, &summary_csv(rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, seed: u64, t: usize, excess: f64) -> MetricsRow {
        MetricsRow {
            algorithm: alg.into(),
            clients: 4,
            seed,
            t,
            rank: 2,
            global_loss: excess + 0.5,
            excess_loss: excess,
            dist_to_oracle: 0.0,
            max_drift: 0.0,
            grad_norm: 0.0,
            floats_down: 1,
            floats_up: 2,
            comm_rounds_cum: t as u64,
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut [1.0, f64::INFINITY]), f64::INFINITY);
    }

    #[test]
    fn single_run_echoes_final_metrics() {
        let rows = vec![row("fedlin", 0, 1, 1e-2), row("fedlin", 0, 2, 1e-5)];
        let s = summarize_rows(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].median_final_excess_loss, 1e-5);
        assert_eq!(s[0].median_final_loss, 0.5 + 1e-5);
        assert_eq!(s[0].median_rounds_to_threshold, Some(2.0));
        assert_eq!(s[0].median_cumulative_floats, 6.0);
    }

    #[test]
    fn plateau_reports_not_reached() {
        let rows: Vec<_> = (0..3).flat_map(|seed| (1..4).map(move |t| row("fedavg", seed, t, 1e-2))).collect();
        let s = summarize_rows(&rows);
        assert_eq!(s[0].median_rounds_to_threshold, None);
        let text = String::from_utf8(summary_csv(&s).unwrap()).unwrap();
        assert!(text.contains("not reached"));
    }

    #[test]
    fn groups_by_algorithm_and_clients() {
        let mut rows = vec![row("fedavg", 0, 1, 1.0), row("fedlin", 0, 1, 1.0)];
        let mut other = row("fedavg", 0, 1, 1.0);
        other.clients = 8;
        rows.push(other);
        assert_eq!(summarize_rows(&rows).len(), 3);
    }
}
