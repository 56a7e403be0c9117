//! A small CPU tensor and layer engine with exact backpropagation.
//!
//! Layout is NCHW row-major throughout. Everything is generic over [`Scalar`] so the same
//! code runs in `f64` for gradient verification and in `f32` for training.

mod conv;
pub mod gradcheck;
mod graph;
pub mod init;
mod layers;
mod loss;
mod optim;
mod tensor;

use thiserror::Error;

pub use self::conv::{conv_output_dim, Conv2d};
pub use self::gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use self::graph::{Gradients, Network, Node, ShapeTrace, Trace};
pub use self::layers::{softmax, BatchNorm, Cache, Dense, Dropout, Layer, LayerKind, Mode, Pool2d};
pub use self::loss::softmax_cross_entropy;
pub use self::optim::{OptimizerKind, OptimizerState};
pub use self::tensor::{Scalar, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for {len} classes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("graph error: {0}")]
    Graph(String),
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Folds several words into one seed with the splitmix64 finalizer.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        acc = z ^ (z >> 31);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn mix_seed_depends_on_order() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_eq!(mix_seed(&[1, 2]), mix_seed(&[1, 2]));
    }
}
