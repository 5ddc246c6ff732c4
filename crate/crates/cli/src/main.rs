//! `m1dg` command-line driver.
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 when a run
//! fails at runtime (blow-up, loss of realizability, I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(name = "m1dg", version, about = "Realizability-preserving DG solver for the M1 model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write field, stats and summary artifacts.
    Run {
        /// TOML config; command-line flags override its `[run]` table
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: config::RunSection,
    },
    /// Limiter convergence study on the unit square.
    Study {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: config::StudySection,
    },
    /// First-order finite-volume reference solution.
    Reference {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: config::ReferenceSection,
    },
    /// Slope-limiter parameter sweep scored against a reference solution.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: config::SweepSection,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<m1dg::Error> for CliError {
    fn from(e: m1dg::Error) -> Self {
        use m1dg::Error as E;
        match e {
            E::Config(_)
            | E::Domain(_)
            | E::MeshParse { .. }
            | E::MeshValidation { .. }
            | E::UnknownScenario(_)
            | E::UnconfiguredBoundary(_)
            | E::Data { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, args } => commands::run(config.as_deref(), args),
        Command::Study { config, args } => commands::study(config.as_deref(), args),
        Command::Reference { config, args } => commands::reference(config.as_deref(), args),
        Command::Sweep { config, args } => commands::sweep(config.as_deref(), args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
