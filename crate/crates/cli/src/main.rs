//! `raresim` command-line front end.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] raresim::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed report: {0}")]
    Report(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::NotConverged(_) => 3,
            Self::Infeasible(_) => 4,
            _ => 1,
        }
    }

    /// Treat a precondition failure from the core as a config error.
    pub fn into_config(self) -> Self {
        match self {
            Self::Core(e) => Self::Config(e.to_string()),
            other => other,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "raresim", version, about = "Rare-event estimation and chance-constrained gain tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a failure probability with MCS, SuS or SBSS.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune flight-control gains under chance constraints.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare true-model call counts of SuS and SBSS at fixed depth.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate { config, seed, replicates, out } => commands::estimate(&config, seed, replicates, out),
        Command::Optimize { config } => commands::optimize(&config),
        Command::Benchmark { config } => commands::benchmark(&config),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("raresim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
