//! Desk-scale residual-inception, inception and residual networks.

mod build;
mod spec;

use thiserror::Error;

use crate::nn::{Layer, LayerKind, Mode, Network, NnError, Scalar, ShapeTrace, Tensor};

pub use self::build::{build_model, BlockInfo, Model, HEAD_NAME};
pub use self::spec::{registry, ArchSpec, Variant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("invalid architecture spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// `relu(x + alpha * branch(x))`. `branch` must preserve the shape of `x`.
pub fn residual_block_forward<T: Scalar>(
    x: &Tensor<T>,
    branch: &mut Network<T>,
    alpha: f64,
    mode: Mode,
) -> Result<Tensor<T>, ArchError> {
    let fx = branch.predict(x, mode, 0)?;
    if fx.shape() != x.shape() {
        return Err(NnError::Shape(format!("branch maps {:?} to {:?}", x.shape(), fx.shape())).into());
    }
    let (sum, _) = Layer::ResidualScaleAdd { scale: alpha }.forward(&[x, &fx], mode, 0, 0)?;
    let (out, _) = Layer::<T>::Relu.forward(&[&sum], mode, 0, 0)?;
    Ok(out)
}

/// Per-layer shapes for a full `[N, C, H, W]` input, stopping at the first failure.
pub fn shape_check<T: Scalar>(model: &Model<T>, input: &[usize]) -> ShapeTrace {
    model.net.shape_trace_for(input)
}

/// Names of batchnorm layers fed directly by a residual summation. Always empty for built models.
pub fn batchnorm_after_sum<T: Scalar>(net: &Network<T>) -> Vec<String> {
    let nodes = net.nodes();
    nodes
        .iter()
        .filter(|n| n.layer.kind() == LayerKind::BatchNorm)
        .filter(|n| n.inputs.iter().any(|&i| nodes[i].layer.kind() == LayerKind::ResidualScaleAdd))
        .map(|n| n.name.clone())
        .collect()
}
