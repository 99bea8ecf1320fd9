use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedlrt_harness::summary::write_summary;
use fedlrt_harness::{
    check_theorems, compare_summary, run_experiment, ConfigOverrides, Experiment, ExperimentConfig, HarnessError,
    Verdict,
};

/// Federated low-rank training experiments.
#[derive(Parser)]
#[command(name = "fedlrt", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its metrics CSV.
    Run(RunArgs),
    /// Check the drift and descent bounds on a finished run.
    Check {
        /// Metrics file written by `run` (its artifacts file must sit next to it).
        metrics: PathBuf,
    },
    /// Tabulate final loss, rounds to threshold and communication per algorithm.
    Summarize {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with any of the fields below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// fedavg, fedlin, fedlrt-none, fedlrt-full, fedlrt-simplified or fedlrt-naive.
    #[arg(long)]
    algorithm: Option<String>,
    /// Legendre feature scaling: orthonormal or standard.
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r_target: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    local_iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rank_init: Option<usize>,
    #[arg(long)]
    r_min: Option<usize>,
    #[arg(long)]
    r_max: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Seeds, repeated or comma separated.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(self) -> (Option<PathBuf>, ConfigOverrides) {
        let flags = ConfigOverrides {
            experiment: self.experiment,
            algorithm: self.algorithm,
            basis: self.basis,
            n: self.n,
            r_target: self.r_target,
            samples: self.samples,
            clients: self.clients,
            local_iters: self.local_iters,
            lr: self.lr,
            tau: self.tau,
            rank_init: self.rank_init,
            r_min: self.r_min,
            r_max: self.r_max,
            rounds: self.rounds,
            seeds: (!self.seeds.is_empty()).then_some(self.seeds),
            out: self.out,
        };
        (self.config, flags)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let (file, flags) = args.overrides();
            let cfg = ExperimentConfig::load(file.as_deref(), flags)?;
            let output = run_experiment(&cfg)?;
            let failed = output.failed_seeds();
            println!(
                "{}: {} seeds, {} rounds each, metrics in {}",
                cfg.algorithm,
                cfg.seeds.len(),
                cfg.rounds,
                cfg.out.display()
            );
            if !failed.is_empty() {
                return Err(HarnessError::Numerical(format!("non-finite values in seeds {failed:?}")));
            }
            Ok(())
        }
        Command::Check { metrics } => {
            let report = check_theorems(&metrics)?;
            println!("{report}");
            if report.verdict() == Verdict::Violated {
                return Err(HarnessError::Violation(format!(
                    "{} drift and {} descent violations",
                    report.drift_violations(),
                    report.descent_violations()
                )));
            }
            Ok(())
        }
        Command::Summarize { metrics, out } => {
            let rows = compare_summary(&metrics)?;
            write_summary(&out, &rows)?;
            println!("{} summary rows written to {}", rows.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // argument errors are configuration errors (exit 1), not clap's default 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
