use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedlrt_harness::metrics::METRICS_HEADER;

fn fedlrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedlrt")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small homogeneous problem that runs in well under a second.
const SMALL: [&str; 14] = [
    "--n", "6", "--r-target", "2", "--samples", "300", "--clients", "2", "--local-iters", "2", "--rounds", "5",
    "--seed", "0,1",
];

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(extra);
    fedlrt(&args)
}

#[test]
fn zero_rounds_write_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let out = run_small(&path, &["--rounds", "0"]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.trim_end(), METRICS_HEADER.join(","));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&run_small(&a, &[])), 0);
    assert_eq!(code(&run_small(&b, &[])), 0);
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    // 2 seeds x 5 rounds plus the header
    assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 11);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let path = dir.path().join("m.csv");
    fs::write(&cfg, "algorithm = \"fedlin\"\nrounds = 2\nclients = 3\n").unwrap();
    let out = fedlrt(&[
        "run", "--config", cfg.to_str().unwrap(), "--n", "5", "--samples", "90", "--local-iters", "2", "--rounds",
        "3", "--seed", "4", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let rows = fedlrt_harness::read_metrics(&path).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.algorithm == "fedlin" && r.clients == 3 && r.seed == 4));
}

#[test]
fn invalid_configuration_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    assert_eq!(code(&run_small(&path, &["--lr", "-1"])), 1);
    assert_eq!(code(&run_small(&path, &["--algorithm", "sgd"])), 1);
    assert_eq!(code(&run_small(&path, &["--tau", "1.5"])), 1);
    assert_eq!(code(&fedlrt(&["run", "--bogus"])), 1);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    assert_eq!(code(&fedlrt(&["run", "--config", cfg.to_str().unwrap()])), 1);
    assert!(!path.exists());
    assert_eq!(code(&fedlrt(&["--help"])), 0);
}

#[test]
fn diverging_seeds_exit_with_two_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let out = run_small(&path, &["--algorithm", "fedavg", "--lr", "1e4", "--rounds", "50"]);
    assert_eq!(code(&out), 2, "{out:?}");
    let artifacts = fedlrt_harness::RunArtifacts::read(&fedlrt_harness::metrics::artifacts_path(&path)).unwrap();
    assert_eq!(artifacts.failed_seeds(), vec![0, 1]);
    let rows = fedlrt_harness::read_metrics(&path).unwrap();
    assert!(rows.iter().all(|r| r.global_loss.is_finite()));
}

#[test]
fn check_passes_on_a_compliant_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    assert_eq!(code(&run_small(&path, &[])), 0);
    let out = fedlrt(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains("verdict: PASS"));
}

#[test]
fn check_flags_an_injected_loss_increase() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    assert_eq!(code(&run_small(&path, &[])), 0);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let loss_col = METRICS_HEADER.iter().position(|h| *h == "global_loss").unwrap();
    let mut fields: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    let loss: f64 = fields[loss_col].parse().unwrap();
    fields[loss_col] = format!("{:.16e}", loss + 10.0);
    lines[3] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = fedlrt(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{out:?}");
    assert!(stdout(&out).contains("VIOLATED"));
}

#[test]
fn check_reports_not_applicable_without_full_correction() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    assert_eq!(code(&run_small(&path, &["--algorithm", "fedavg"])), 0);
    let out = fedlrt(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("verdict: not applicable"));
}

#[test]
fn check_reports_not_applicable_for_large_steps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    assert_eq!(code(&run_small(&path, &["--lr", "0.05", "--local-iters", "20"])), 0);
    let out = fedlrt(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains("verdict: not applicable"));
}

#[test]
fn summarize_tabulates_every_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("lrt.csv");
    let b = dir.path().join("lin.csv");
    let summary = dir.path().join("summary.csv");
    assert_eq!(code(&run_small(&a, &[])), 0);
    assert_eq!(code(&run_small(&b, &["--algorithm", "fedlin"])), 0);
    let out = fedlrt(&["summarize", a.to_str().unwrap(), b.to_str().unwrap(), "--out", summary.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = fs::read_to_string(&summary).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("fedlin,2,2,"));
    assert!(lines[2].starts_with("fedlrt-full,2,2,"));
}

#[test]
fn summarize_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.csv");
    fs::write(&bogus, "a,b\n1,2\n").unwrap();
    let out = fedlrt(&["summarize", bogus.to_str().unwrap(), "--out", dir.path().join("s.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}
