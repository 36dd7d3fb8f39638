//! Command-line driver for the untangle toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

mod commands;
mod config;
mod output;

#[derive(Debug, Parser)]
#[command(name = "untangle", version, about = "Measure and reduce semantic entanglement in RAG corpora")]
struct Cli {
    /// JSON file supplying default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Leave the `generated_at` field out of JSON outputs.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted topics and boundaries.
    GenCorpus(commands::GenCorpusArgs),
    /// Sweep the boundary threshold against annotations and calibrate alpha.
    Calibrate(commands::CalibrateArgs),
    /// Split documents into fragments at topic boundaries.
    Segment(commands::SegmentArgs),
    /// Restructure documents into knowledge objects.
    Disentangle(commands::DisentangleArgs),
    /// Build or extend a knowledge object store.
    Index(commands::IndexArgs),
    /// Filtered top-k retrieval over a store.
    Query(commands::QueryArgs),
    /// Entanglement index of each labeled document.
    Ei(commands::EiArgs),
    /// Ingest an interaction log: metrics, signposts, re-disentanglement queue.
    Feedback(commands::FeedbackArgs),
    /// Before/after summary with bootstrap intervals, as JSON and CSV.
    Report(commands::ReportArgs),
}

/// Flags shared by every command that embeds text.
#[derive(Debug, Args, Clone)]
pub struct EmbedderArg {
    /// `anchor:FILE`, `table:FILE` or `external-vectors:FILE`.
    #[arg(long)]
    embedder: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] untangle::Error),
    #[error("writing CSV to {0}: {1}")]
    Csv(PathBuf, csv::Error),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "USAGE",
            CliError::Domain(e) => e.code(),
            CliError::Csv(..) => "IO_ERROR",
        }
    }
}

pub struct Globals {
    pub config: config::RunConfig,
    pub no_timestamp: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = Globals {
        config: config::RunConfig::load(cli.config.as_deref())?,
        no_timestamp: cli.no_timestamp,
    };
    match cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(a, &g),
        Command::Calibrate(a) => commands::calibrate(a, &g),
        Command::Segment(a) => commands::segment(a, &g),
        Command::Disentangle(a) => commands::disentangle(a, &g),
        Command::Index(a) => commands::index(a, &g),
        Command::Query(a) => commands::query(a, &g),
        Command::Ei(a) => commands::ei(a, &g),
        Command::Feedback(a) => commands::feedback(a, &g),
        Command::Report(a) => commands::report(a, &g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}", json!({"error": {"code": e.code(), "message": e.to_string()}}));
            ExitCode::from(1)
        }
    }
}
