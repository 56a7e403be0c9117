//! Batch command-line front end: preprocessing, pretraining, training, evaluation, ROC export
//! and model comparison.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error, 4 training failure.

mod commands;
pub mod config;
mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use prostapipe::pipeline::PipelineError;
use prostapipe::transfer::TransferError;
use thiserror::Error;

pub use self::svg::roc_svg;

/// Environment variable consulted for the seed when neither `--seed` nor the config sets one.
pub const SEED_ENV: &str = "PROSTAPIPE_SEED";

#[derive(Debug, Parser)]
#[command(name = "prostapipe", version, about = "Grayscale MRI-style preprocessing, CNN training and binary classification reports")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice (default: config, then $PROSTAPIPE_SEED, then 0)
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Run configuration file with [preprocess], [arch], [train], [split], [proxy], [paths], [compare] sections
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory that receives every output file
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-class image set with a manifest
    Synth(SynthArgs),
    /// Median-filter and CLAHE every image of a manifest
    Preprocess(ManifestArgs),
    /// Split a manifest by patient into train/val/test manifests
    Split(ManifestArgs),
    /// Pretrain a backbone on the synthetic shape task and save a checkpoint
    Pretrain,
    /// Train a classifier on the train part of a patient-level split
    Train(TrainArgs),
    /// Score a checkpoint on a manifest and write metrics, predictions and the ROC curve
    Evaluate(EvaluateArgs),
    /// Build the ROC curve of a predictions file
    Roc(RocArgs),
    /// Train and evaluate several architectures on one split and tabulate the results
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of images
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Image side length in pixels
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Number of patients the images are spread over
    #[arg(long, default_value_t = 20)]
    pub patients: usize,
    /// Amplitude of the additive uniform noise, in [0, 1]
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// Manifest CSV with path,patient_id,label columns
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest CSV with path,patient_id,label columns
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Checkpoint to start from; a different class count gets a fresh head
    #[arg(long, value_name = "FILE")]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to score; its architecture must match the configuration
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Manifest of the images to score
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    /// Predictions file written by evaluate or compare
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Also render the curve as roc.svg
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Manifest CSV with path,patient_id,label columns
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Order table rows by descending AUC
    #[arg(long)]
    pub sort_by_auc: bool,
    /// Pretrain each backbone on the synthetic shape task before training
    #[arg(long)]
    pub pretrain: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::DidNotConverge { .. } | PipelineError::Diverged { .. } => CliError::Training(msg),
            PipelineError::Invalid(_) | PipelineError::Arch(_) => CliError::Config(msg),
            PipelineError::Transfer(t) => t.into(),
            _ => CliError::Data(msg),
        }
    }
}

impl From<TransferError> for CliError {
    fn from(e: TransferError) -> Self {
        let msg = e.to_string();
        match e {
            TransferError::SpecHashMismatch { .. } | TransferError::IndexOutOfRange { .. } | TransferError::InvalidSpec(_) => {
                CliError::Config(msg)
            }
            TransferError::Arch(_) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<prostapipe::data::DataError> for CliError {
    fn from(e: prostapipe::data::DataError) -> Self {
        match e {
            prostapipe::data::DataError::InvalidSplit(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the process exit code.
/// Output paths go to stdout, diagnostics to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout();
    match commands::run(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = stdout.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
