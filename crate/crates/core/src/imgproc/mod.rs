//! Grayscale enhancement: median filtering followed by CLAHE.

mod clahe;
mod image;
mod median;

use thiserror::Error;

pub use self::clahe::{clahe, clip_redistribute, tile_histogram, tile_mappings, ClaheParams, Histogram, TileMapping};
pub use self::image::{GrayImage, DEFAULT_LEVELS};
pub use self::median::{median_filter, BorderPolicy, MedianMode, MedianParams};

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("image must be at least 1x1")]
    EmptyImage,
    #[error("level count must be in 2..=65536, got {0}")]
    InvalidLevels(u32),
    #[error("expected {expected} pixels, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("pixel value {value} outside 0..{levels}")]
    LevelOutOfRange { value: u32, levels: u32 },
    #[error("operation needs an 8-bit image, this one has {0} levels")]
    NotEightBit(u32),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Median filter then CLAHE.
pub fn preprocess(img: &GrayImage, median: &MedianParams, clahe_params: &ClaheParams) -> Result<GrayImage, ImgError> {
    let smoothed = median_filter(img, median)?;
    clahe(&smoothed, clahe_params)
}
