//! `fedshap`: train, explain, and serve a two-party federated KNN
//! explainer from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or pipeline error,
//! 3 protocol or transport error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::InstanceSelector;
use crate::config::{CommonFlags, Settings};

/// A failed invocation, split by which exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Pipeline(fedshap_core::Error),
}

#[derive(Parser)]
#[command(
    name = "fedshap",
    version,
    about = "Shapley-value explanations for a two-party vertically federated KNN model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the bundled census-shaped sample corpus as CSV
    SampleData {
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Usable rows to generate
        #[arg(long, default_value_t = 26048)]
        rows: usize,
        /// Generator seed
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Fit the KNN model and persist the snapshot plus split manifest
    Train {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Explain a single prediction (writes report and bar CSVs)
    Explain {
        #[command(flatten)]
        flags: CommonFlags,
        /// Instance to explain: a raw id, id:N, or row:N (test-split row)
        #[arg(long)]
        instance: String,
    },
    /// Explain a deterministic sample (writes scatter and bar CSVs)
    Batch {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Serve the guest party over TCP until interrupted
    Guest {
        /// Guest TOML configuration file
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SampleData { out, rows, seed } => commands::cmd_sample_data(&out, rows, seed),
        Command::Train { flags } => {
            let settings = Settings::resolve(&flags)?;
            commands::cmd_train(&settings)
        }
        Command::Explain { flags, instance } => {
            let settings = Settings::resolve(&flags)?;
            let selector = InstanceSelector::parse(&instance)?;
            commands::cmd_explain(&settings, selector)
        }
        Command::Batch { flags } => {
            let settings = Settings::resolve(&flags)?;
            commands::cmd_batch(&settings)
        }
        Command::Guest { config } => commands::cmd_guest(&config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_protocol() { 3 } else { 2 })
        }
    }
}
