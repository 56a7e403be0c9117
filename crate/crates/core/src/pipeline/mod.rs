//! Proxy pretraining, training, evaluation and multi-model comparison.

mod compare;
mod evaluate;
mod synth;
mod train;

use std::path::Path;

use thiserror::Error;

use crate::arch::ArchError;
use crate::data::DataError;
use crate::imgproc::ImgError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::transfer::TransferError;

pub use self::compare::{compare_models, run_model, ExperimentData, ExperimentReport, ModelResult, ModelRun};
pub use self::evaluate::{evaluate, parse_predictions, Evaluation, Prediction, DECISION_THRESHOLD, PREDICTIONS_HEADER};
pub use self::synth::{render_shape, synth_dataset, ShapeKind, SynthTask};
pub use self::train::{
    argmax, init_from_checkpoint, loss_and_accuracy, pretrain_proxy, train, Dataset, EpochStats, ProxyConfig, TrainConfig,
    TrainHistory,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Invalid(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("DidNotConverge: reached train accuracy {reached:.4} after {} epochs, target {target}", history.epochs.len())]
    DidNotConverge { target: f64, reached: f64, history: TrainHistory },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize, history: TrainHistory },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Image(#[from] ImgError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), reason: e.to_string() }
    }
}
