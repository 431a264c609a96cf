//! Command-line entry point.
//!
//! Settings resolve as defaults < `--config` file < flags. Every run logs its
//! resolved settings to stderr; outputs go under `--out` only.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::correlation::PlccMapping;
use crate::stats::GroupBy;
use crate::Dimension;

pub use config::FileConfig;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const IO: i32 = 3;
    pub const BIND: i32 = 4;
    pub const NON_FINITE_LOSS: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("training diverged: non-finite loss at step {0}")]
    NonFiniteLoss(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Io(_) => exit::IO,
            CliError::Bind { .. } => exit::BIND,
            CliError::NonFiniteLoss(_) => exit::NON_FINITE_LOSS,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "editqa",
    version,
    about = "Rating aggregation, reliability and benchmark tooling for edited-video quality"
)]
pub struct Cli {
    /// TOML file with per-subcommand sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize raw ratings into MOS.
    Mos(MosArgs),
    /// Inter-rater reliability per dimension.
    Icc(IccArgs),
    /// Score prediction files against MOS over seeded split trials.
    Bench(BenchArgs),
    /// Run the rating-session HTTP service.
    Serve(ServeArgs),
    /// Train the reference regression head on synthetic data.
    Headtrain(HeadtrainArgs),
    /// Check a manifest and optional ratings/prediction files.
    Validate(ValidateArgs),
    /// Write completed session ratings from a service log.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct MosArgs {
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also write grouped MOS statistics (repeatable).
    #[arg(long, value_parser = parse_group_by)]
    pub aggregate: Vec<GroupBy>,
}

#[derive(Debug, Args)]
pub struct IccArgs {
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict to one dimension.
    #[arg(long)]
    pub dimension: Option<Dimension>,
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Subjects whose mean repeat deviation exceeds this are excluded.
    #[arg(long)]
    pub repeat_flag_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of `<method>.csv` prediction files.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub mos: Option<PathBuf>,
    /// Needed for the per-group breakdown.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Train:test ratio such as `4:1`.
    #[arg(long, value_parser = parse_ratio)]
    pub ratio: Option<(u32, u32)>,
    #[arg(long, value_parser = parse_mapping)]
    pub plcc_mapping: Option<PlccMapping>,
    #[arg(long, value_parser = parse_group_by)]
    pub breakdown: Option<GroupBy>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Calibration reference (JSON).
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Append-only session log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeadtrainArgs {
    /// Synthetic-data spec (TOML).
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Prediction files to check (repeatable).
    #[arg(long)]
    pub predictions: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn parse_group_by(s: &str) -> Result<GroupBy, String> {
    match s {
        "model" => Ok(GroupBy::Model),
        "category" => Ok(GroupBy::Category),
        "model_category" | "model-category" => Ok(GroupBy::ModelCategory),
        _ => Err(format!("unknown grouping `{s}` (model, category, model_category)")),
    }
}

fn parse_mapping(s: &str) -> Result<PlccMapping, String> {
    match s {
        "linear" => Ok(PlccMapping::Linear),
        "logistic" => Ok(PlccMapping::Logistic),
        _ => Err(format!("unknown PLCC mapping `{s}` (linear, logistic)")),
    }
}

fn parse_ratio(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("ratio `{s}` must look like 4:1"))?;
    let a: u32 = a.trim().parse().map_err(|e| format!("ratio `{s}`: {e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("ratio `{s}`: {e}"))?;
    Ok((a, b))
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::VALIDATION } else { exit::OK };
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let globals = config::Globals::resolve(&cli, &file);
    match cli.command {
        Command::Mos(a) => commands::mos(config::resolve_mos(a, &file, &globals)?),
        Command::Icc(a) => commands::icc(config::resolve_icc(a, &file, &globals)?),
        Command::Bench(a) => commands::bench(config::resolve_bench(a, &file, &globals)?),
        Command::Serve(a) => commands::serve(config::resolve_serve(a, &file, &globals)?),
        Command::Headtrain(a) => commands::headtrain(config::resolve_headtrain(a, &file, &globals)?),
        Command::Validate(a) => commands::validate(config::resolve_validate(a, &file)?),
        Command::Export(a) => commands::export(config::resolve_export(a, &file, &globals)?),
    }
}
