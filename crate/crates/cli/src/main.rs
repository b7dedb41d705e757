//! Command-line interface of the index tuning engine.
//!
//! Exit codes: 0 success, 2 validation error, 3 budget-infeasible request.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{forecast, generate, train, tune};

#[derive(Parser)]
#[command(
    name = "idxtune",
    version,
    about = "Offline index tuning engine with ML-assisted search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recommend an index configuration for a workload.
    Tune(tune::TuneArgs),
    /// Generate a synthetic schema and workload.
    Generate(generate::GenerateArgs),
    /// Train filter / QPR / cost models and write them as JSON documents.
    Train(train::TrainArgs),
    /// Forecast per-template query arrival counts.
    Forecast(forecast::ForecastArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Tune(args) => tune::run(args),
        Command::Generate(args) => generate::run(args),
        Command::Train(args) => train::run(args),
        Command::Forecast(args) => forecast::run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
