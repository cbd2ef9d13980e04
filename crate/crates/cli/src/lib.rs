//! The `bloomnet` command-line tool: validate corpora, cross-validate
//! models, run ablations and comparisons, and render reports.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use bloomnet::corpus::DataFormat;
use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::report::ReportFormat;

/// Exit status for a failed command.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration: exit code 1.
    Usage(anyhow::Error),
    /// The run itself failed: exit code 2.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bloomnet", version, about = "Bloom's-taxonomy question classification experiments")]
pub struct Cli {
    /// Folds trained concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print per-level class counts of datasets (from a config or given paths).
    ValidateData {
        #[arg(short, long)]
        config: Option<PathBuf>,
        paths: Vec<PathBuf>,
    },
    /// Cross-validate the configured model.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides `model.name`.
        #[arg(long)]
        model: Option<String>,
    },
    /// Score a saved checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate the four BloomNet branch selections.
    Ablate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Cross-validate every model in `model.compare` and test differences.
    Compare {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Render stored result JSON files as a table.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic stand-in corpora.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "csv")]
        format: DataFormat,
    },
}

fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(Failure::Usage)
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let workers = cli.workers;
    match cli.command {
        Command::ValidateData { config, mut paths } => {
            if let Some(c) = config {
                let c = load_config(&c)?;
                paths.push(c.data.dataset1);
                paths.extend(c.data.dataset2);
            }
            commands::validate_data(&paths)
        }
        Command::Train { config, model } => {
            let mut c = load_config(&config)?;
            if let Some(m) = model {
                c.model.name = m;
            }
            commands::train(c, workers)
        }
        Command::Evaluate { checkpoint, data, out } => commands::evaluate(&checkpoint, &data, out.as_deref()),
        Command::Ablate { config } => commands::ablate(load_config(&config)?, workers),
        Command::Compare { config } => commands::compare(load_config(&config)?, workers),
        Command::Report { files, format, out } => commands::report(&files, format, out.as_deref()),
        Command::GenerateData { out, seed, format } => commands::generate_data(&out, seed, format),
    }
}
