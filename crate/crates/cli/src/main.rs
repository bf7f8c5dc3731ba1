//! Command-line surface for finite-key BB84 secret-key rates.
//!
//! Four subcommands cover the workflow: `design` optimizes an experiment
//! against an a-priori channel model, `rate` computes the extractable key
//! from measured values (re-optimizing only the failure-budget split),
//! `sweep` tabulates rate-versus-transmittivity curves as CSV, and `budget`
//! inspects the epsilon decomposition.
//!
//! Exit codes: 0 success (including "no key"), 2 configuration or
//! validation error, 3 I/O or infeasible optimization setup, 4 bound
//! inapplicable to the supplied data.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Inapplicable(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Infeasible(_) => 3,
            CliError::Inapplicable(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "keyrate",
    version,
    about = "Composable finite-key secret-key rates for practical BB84 implementations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize an experiment design against the a-priori channel model.
    Design {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides, e.g. --param channel.t=0.2
        #[arg(long = "param")]
        params: Vec<String>,
        /// Write the machine-readable design record here (overrides
        /// output.record from the config).
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Compute the secret fraction and key length from measured values.
    Rate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "param")]
        params: Vec<String>,
        /// Compare the measured values against a design record.
        #[arg(long)]
        design_record: Option<PathBuf>,
    },
    /// Tabulate optimized rates over an (N, t) grid into a CSV file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "param")]
        params: Vec<String>,
        /// CSV output path (overrides output.csv from the config).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Show the optimized epsilon split and its sensitivity.
    Budget {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "param")]
        params: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design {
            config,
            params,
            record,
        } => {
            let cfg = config::load(&config, &params)?;
            commands::cmd_design(&cfg, record.as_deref())
        }
        Command::Rate {
            config,
            params,
            design_record,
        } => {
            let cfg = config::load(&config, &params)?;
            commands::cmd_rate(&cfg, design_record.as_deref())
        }
        Command::Sweep {
            config,
            params,
            output,
        } => {
            let cfg = config::load(&config, &params)?;
            let effective = config::effective_document(&config, &params)?;
            commands::cmd_sweep(&cfg, output.as_deref(), &effective)
        }
        Command::Budget { config, params } => {
            let cfg = config::load(&config, &params)?;
            commands::cmd_budget(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
