//! `robout`: detect conditional outliers in a CSV file, simulate
//! contaminated data and run Monte Carlo benchmarks.

mod args;
mod benchmark;
mod detect;
mod output;
mod simulate;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "robout", version, about = "Robust conditional-outlier detection")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ROBOUT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select predictors, fit robustly and flag outliers in a CSV file.
    Detect(detect::DetectArgs),
    /// Draw a contaminated instance and write data.csv and truth.json.
    Simulate(simulate::SimulateArgs),
    /// Monte Carlo comparison of variants over an m grid.
    Benchmark(benchmark::BenchmarkArgs),
}

/// Exit status contract: 0 success, 1 usage or data error, 2 when every
/// requested detection cell was infeasible.
pub enum Outcome {
    Success,
    AllInfeasible,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Detect(a) => detect::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Benchmark(a) => benchmark::run(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::AllInfeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
