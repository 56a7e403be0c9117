//! Checkpoints, layer freezing and classifier-head replacement.

mod checkpoint;

use thiserror::Error;

use crate::arch::{ArchError, Model, HEAD_NAME};
use crate::nn::init::init_layer;
use crate::nn::{Dense, Layer, NnError, Scalar};

pub use self::checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, NamedArray, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("SpecHashMismatch: checkpoint spec hash {found:016x} does not match expected {expected:016x}")]
    SpecHashMismatch { expected: u64, found: u64 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("cannot freeze {k} layers of a model with {layers}")]
    IndexOutOfRange { k: usize, layers: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

impl From<NnError> for TransferError {
    fn from(e: NnError) -> Self {
        TransferError::Arch(e.into())
    }
}

/// Marks the first `k` layers (input excluded, in build order) non-trainable and the rest
/// trainable. Frozen batchnorm layers also stop updating their running statistics.
pub fn freeze_prefix<T: Scalar>(model: &mut Model<T>, k: usize) -> Result<(), TransferError> {
    let layers = model.layer_count();
    if k > layers {
        return Err(TransferError::IndexOutOfRange { k, layers });
    }
    for i in 1..model.net.len() {
        model.net.set_frozen(i, i <= k);
    }
    Ok(())
}

/// Swaps the dense head for a freshly seeded one with `n_classes` outputs. The new head is
/// trainable; nothing else changes.
pub fn replace_head<T: Scalar>(model: &mut Model<T>, n_classes: usize, seed: u64) -> Result<(), TransferError> {
    if n_classes < 2 {
        return Err(TransferError::InvalidSpec(format!("n_classes must be at least 2, got {n_classes}")));
    }
    let idx = model.head_index();
    let node = model.net.node_mut(idx);
    let Layer::Dense(old) = &node.layer else {
        return Err(TransferError::InvalidSpec(format!("{HEAD_NAME} is not a dense layer")));
    };
    let mut layer = Layer::Dense(Dense::new(old.in_features, n_classes));
    init_layer(&mut layer, seed, HEAD_NAME);
    node.layer = layer;
    model.net.set_frozen(idx, false);
    model.spec.n_classes = n_classes;
    Ok(())
}
