//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 check failure, 2 configuration or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use localsa::harness::{
    evaluate_bound_at, replay_checks, run_experiment, validate_assumptions, ExperimentConfig,
};
use localsa::markov::MarkovChain;

#[derive(Parser)]
#[command(
    name = "localsa",
    about = "Local stochastic approximation simulator: multi-trial runs, rate-bound overlays, and inequality monitors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write trace.csv / summary.json /
    /// checks.json (plus round-logs) into the output directory.
    Run {
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Build the configured federation and validate the assumptions it is
    /// supposed to satisfy; prints a pass/fail table.
    Validate { config: PathBuf },
    /// Exact mixing diagnostics for a plain-text chain file.
    Mixing {
        chain_file: PathBuf,
        /// Total-variation precision level.
        #[arg(long)]
        alpha: f64,
    },
    /// Evaluate the applicable rate bound at round k under the config's
    /// schedule (runs the config's trials to measure the anchor error).
    Bounds {
        config: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Replay the stored check reports from a trace directory and compare.
    Check { trace_dir: PathBuf },
}

fn run(cli: Cli) -> localsa::Result<i32> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg, &out)?;
            println!(
                "wrote {} (rounds {}, trials {})",
                out.display(),
                cfg.rounds,
                cfg.trials
            );
            let mut failed = false;
            for check in &summary.checks {
                let status = if check.passed { "pass" } else { "FAIL" };
                println!(
                    "  check {:<18} {:>5} checks  {:>3} violations  [{status}]",
                    check.name, check.total_checks, check.violations
                );
                failed |= !check.passed && !check.statistical;
            }
            Ok(if failed { 1 } else { 0 })
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let reports = validate_assumptions(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
            Ok(if reports.iter().all(|r| r.passed) { 0 } else { 1 })
        }
        Command::Mixing { chain_file, alpha } => {
            let chain = MarkovChain::from_matrix_text(&std::fs::read_to_string(&chain_file)?)?;
            let profile = chain.mixing_time(alpha)?;
            let grid: Vec<f64> = (0..10)
                .map(|j| 10f64.powf(-4.0 + 3.0 * j as f64 / 9.0))
                .collect();
            let c = chain.estimate_geometric_constant(&grid)?;
            println!("states: {}", chain.n_states());
            println!("alpha:  {alpha}");
            println!("tau:    {}", profile.tau);
            println!("C:      {c}  (tau <= C log(1/alpha) across the default grid)");
            let head: Vec<String> = profile
                .d_curve
                .iter()
                .take(12)
                .map(|d| format!("{d:.6}"))
                .collect();
            println!("d(k):   {}", head.join(" "));
            Ok(0)
        }
        Command::Bounds { config, k } => {
            let cfg = ExperimentConfig::load(&config)?;
            let eval = evaluate_bound_at(&cfg, k)?;
            println!("{}", serde_json::to_string_pretty(&eval)?);
            Ok(0)
        }
        Command::Check { trace_dir } => {
            let (recomputed, stored) = replay_checks(&trace_dir)?;
            let mut ok = recomputed == stored;
            if !ok {
                eprintln!("replayed reports differ from stored checks.json");
            }
            for check in &recomputed {
                let status = if check.passed { "pass" } else { "FAIL" };
                println!(
                    "  check {:<18} {:>5} checks  {:>3} violations  [{status}]",
                    check.name, check.total_checks, check.violations
                );
                ok &= check.passed || check.statistical;
            }
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
