//! evanet: evolutionary search over spatio-temporal CNN genomes.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config contents, or input files: exit code 2.
    Usage(String),
    /// Filesystem or archive I/O failures: exit code 3.
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "evanet",
    about = "Evolve spatio-temporal CNN architectures, train them, and ensemble the top models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run tournament evolution and write a resumable run archive.
    Evolve(commands::evolve::EvolveArgs),
    /// Run the budget-matched random-search baseline.
    RandomSearch(commands::evolve::EvolveArgs),
    /// Train one genome on the toy dataset and write a checkpoint.
    Train(commands::train::TrainArgs),
    /// Evaluate checkpoints individually and as a softmax-averaging ensemble.
    Ensemble(commands::ensemble::EnsembleArgs),
    /// Emit round-indexed fitness CSV plus top-genome layer statistics.
    Report(commands::report::ReportArgs),
    /// Print an iTGM layer's materialized mixture kernel rows as CSV.
    KernelInspect(commands::inspect::InspectArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(args) => commands::evolve::run(args, commands::evolve::Mode::Evolution),
        Command::RandomSearch(args) => {
            commands::evolve::run(args, commands::evolve::Mode::RandomSearch)
        }
        Command::Train(args) => commands::train::run(args),
        Command::Ensemble(args) => commands::ensemble::run(args),
        Command::Report(args) => commands::report::run(args),
        Command::KernelInspect(args) => commands::inspect::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Worker-count resolution: EVANET_WORKERS overrides the flag.
pub fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("EVANET_WORKERS") {
        Ok(value) => {
            let parsed: usize = value
                .parse()
                .map_err(|_| CliError::Usage(format!("EVANET_WORKERS must be an integer, got `{value}`")))?;
            Ok(Some(parsed))
        }
        Err(_) => Ok(flag),
    }
}

pub use config::{load_config, FitnessKind, RunConfigFile};
