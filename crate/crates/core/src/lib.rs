//! Grayscale MRI-style preprocessing, miniature residual-inception classifiers with
//! transfer-learning mechanics, and binary evaluation metrics with ROC/AUC.

pub mod arch;
pub mod data;
pub mod imgproc;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod transfer;
