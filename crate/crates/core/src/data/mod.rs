//! Image manifests, patient-level splits, batching and bulk preprocessing.

mod manifest;
mod split;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::imgproc::{preprocess, ClaheParams, GrayImage, ImgError, MedianParams};
use crate::nn::Tensor;

pub use self::manifest::{load_manifest, Label, Manifest, ManifestStats, Sample, MANIFEST_HEADER};
pub use self::split::{make_batches, split_by_patient, Part, Split, SplitSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("manifest has no {0} column")]
    MissingColumn(&'static str),
    #[error("row {row}: unknown label {label:?} (expected significant or nonsignificant)")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: empty {column}")]
    EmptyField { row: usize, column: &'static str },
    #[error("image {0} is listed twice")]
    DuplicatePath(String),
    #[error("manifest has no rows")]
    EmptyManifest,
    #[error("{patients} patients cannot fill the requested split (needs {needed})")]
    TooFewPatients { patients: usize, needed: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: String, reason: String },
    #[error(transparent)]
    Image(#[from] ImgError),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), reason: e.to_string() }
    }
}

/// Result of preprocessing a manifest: the processed manifest plus any images that failed.
#[derive(Debug)]
pub struct Preprocessed {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub failures: Vec<DataError>,
}

/// Runs median + CLAHE over every image and writes `images/NNNNN_<stem>.pgm` plus
/// `manifest.csv` under `out_dir`. Unreadable images are skipped and reported.
pub fn apply_preprocessing(
    m: &Manifest,
    median: &MedianParams,
    clahe: &ClaheParams,
    out_dir: &Path,
) -> Result<Preprocessed, DataError> {
    let out_dir = manifest::absolute(out_dir);
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| DataError::io(&img_dir, e))?;
    let results: Vec<Result<Sample, DataError>> = m
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let unreadable = |reason: String| DataError::UnreadableImage { path: s.path.display().to_string(), reason };
            let img = GrayImage::read(&s.path).map_err(|e| unreadable(e.to_string()))?;
            let out = preprocess(&img, median, clahe).map_err(|e| unreadable(e.to_string()))?;
            let stem = s.path.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
            let path = img_dir.join(format!("{i:05}_{stem}.pgm"));
            out.write(&path)?;
            Ok(Sample { path, patient_id: s.patient_id.clone(), label: s.label })
        })
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::warn!("{e}");
                failures.push(e);
            }
        }
    }
    let manifest = Manifest { samples };
    let manifest_path = out_dir.join("manifest.csv");
    manifest.write(&manifest_path)?;
    Ok(Preprocessed { manifest, manifest_path, failures })
}

/// Scales an image to `[0, 1]`, resamples it to `height x width` and repeats it over `channels`.
pub fn image_to_chw(img: &GrayImage, height: usize, width: usize, channels: usize) -> Result<Vec<f32>, DataError> {
    let img = if img.width() == width && img.height() == height { img.clone() } else { img.resize_nearest(width, height)? };
    let scale = 1.0 / (img.levels() - 1) as f32;
    let plane: Vec<f32> = img.pixels().iter().map(|&v| f32::from(v) * scale).collect();
    Ok(plane.repeat(channels))
}

/// Loads every image of `m` into one `[N, C, H, W]` tensor plus class indices.
pub fn load_tensor(m: &Manifest, height: usize, width: usize, channels: usize) -> Result<(Tensor<f32>, Vec<usize>), DataError> {
    let planes: Vec<Vec<f32>> = m
        .samples
        .par_iter()
        .map(|s| {
            let img = GrayImage::read(&s.path)
                .map_err(|e| DataError::UnreadableImage { path: s.path.display().to_string(), reason: e.to_string() })?;
            image_to_chw(&img, height, width, channels)
        })
        .collect::<Result<_, _>>()?;
    let labels = m.samples.iter().map(|s| s.label.class()).collect();
    let tensor = Tensor::new(vec![m.len(), channels, height, width], planes.concat())
        .map_err(|e| DataError::InvalidSplit(e.to_string()))?;
    Ok((tensor, labels))
}
