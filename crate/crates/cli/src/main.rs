//! `vulnlab`: runs one pipeline stage per invocation.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage or
//! configuration error. Errors are printed to stderr prefixed by their name.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vulnlab_core::evaluator::ReportFormat;

use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{message}")]
    Domain { kind: &'static str, message: String },
}

impl CliError {
    pub fn domain(kind: &'static str, err: impl std::fmt::Display) -> Self {
        CliError::Domain {
            kind,
            message: err.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Domain { kind, .. } => kind,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vulnlab", version, about = "Vulnerability-fix mining and LSTM vulnerability prediction")]
struct Cli {
    /// Pipeline configuration (JSON). Defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every module seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Embedding provider: word2vec, fasttext or external.
    #[arg(long, global = true)]
    provider: Option<String>,
    /// Output path of the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true)]
    format: Option<ReportFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Find candidate fix commits and write them as JSONL.
    Mine {
        /// Stop after this many accepted commits.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Turn mined commits into a labeled snippet dataset (JSONL).
    Label,
    /// Build the token corpus from the dataset.
    Tokenize,
    /// Train the configured embedding provider on the corpus.
    TrainEmbedding,
    /// Train the LSTM classifier.
    Train,
    /// Score the classifier and write a per-category report.
    Evaluate,
    /// Cross providers with a hyperparameter grid and write a report.
    Sweep,
    /// Re-render a JSON report in the requested format.
    Report,
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(provider) = &cli.provider {
        cfg.provider = provider.clone();
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    if let Command::Mine { limit: Some(limit) } = cli.command {
        cfg.limit = Some(limit);
    }
    cfg.apply_master_seed();
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| commands::run(cli.command, &cfg, cli.out.as_deref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}: {err}", err.kind());
            ExitCode::from(err.exit_code())
        }
    }
}
