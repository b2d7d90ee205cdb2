//! Single binary: generate / train / forecast / eval / bench.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
//! Failures print one machine-readable JSON object to stderr.

mod commands;
mod errjson;

use clap::{Parser, Subcommand};
use errjson::CliError;

#[derive(Parser)]
#[command(
    name = "zerocast",
    version,
    about = "Zero-shot time-series forecasting: synthetic priors, a state-space forecaster, and a MASE benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic series from the training priors as JSONL.
    Generate(commands::generate::GenerateArgs),
    /// Train a checkpoint on prior-generated data.
    Train(commands::train::TrainArgs),
    /// Forecast series from a JSONL file with a trained checkpoint.
    Forecast(commands::forecast::ForecastArgs),
    /// Score forecasters against datasets with the seasonal MASE metric.
    Eval(commands::eval::EvalArgs),
    /// Measure inference wall time across horizons and batch sizes.
    Bench(commands::bench::BenchArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Forecast(args) => commands::forecast::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Bench(args) => commands::bench::run(args),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            let cli_err = CliError::from_anyhow(&err);
            eprintln!("{}", cli_err.to_json());
            std::process::exit(cli_err.exit_code());
        }
    }
}
