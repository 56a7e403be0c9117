use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::synth::{synth_dataset, SynthTask};
use super::PipelineError;
use crate::arch::{build_model, ArchSpec, Model};
use crate::data::{image_to_chw, make_batches, Manifest, SplitSpec};
use crate::imgproc::{preprocess, ClaheParams, GrayImage, MedianMode, MedianParams};
use crate::nn::{fnv1a64, softmax_cross_entropy, Mode, OptimizerKind, OptimizerState, Tensor};
use crate::transfer::{freeze_prefix, read_checkpoint, replace_head, TransferError};

/// Images as one `[N, C, H, W]` tensor plus class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor<f32>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Tensor<f32>, y: Vec<usize>) -> Result<Self, PipelineError> {
        if x.shape().len() != 4 || x.dim(0) != y.len() {
            return Err(PipelineError::Invalid(format!("{} labels for images of shape {:?}", y.len(), x.shape())));
        }
        Ok(Self { x, y })
    }

    pub fn from_images(images: &[GrayImage], labels: Vec<usize>, spec: &ArchSpec) -> Result<Self, PipelineError> {
        if images.is_empty() {
            return Err(PipelineError::EmptySplit("image set"));
        }
        let planes: Vec<Vec<f32>> = images
            .par_iter()
            .map(|img| image_to_chw(img, spec.input_height, spec.input_width, spec.input_channels))
            .collect::<Result<_, _>>()?;
        let shape = vec![images.len(), spec.input_channels, spec.input_height, spec.input_width];
        Self::new(Tensor::new(shape, planes.concat())?, labels)
    }

    /// Reads every image of `m`, optionally runs median + CLAHE, and resamples to the model input.
    pub fn from_manifest(
        m: &Manifest,
        spec: &ArchSpec,
        prep: Option<(&MedianParams, &ClaheParams)>,
    ) -> Result<Self, PipelineError> {
        let images: Vec<GrayImage> = m
            .samples
            .par_iter()
            .map(|s| {
                let img = GrayImage::read(&s.path).map_err(|e| crate::data::DataError::UnreadableImage {
                    path: s.path.display().to_string(),
                    reason: e.to_string(),
                })?;
                Ok(match prep {
                    Some((mp, cp)) => preprocess(&img, mp, cp)?,
                    None => img,
                })
            })
            .collect::<Result<_, PipelineError>>()?;
        Self::from_images(&images, m.samples.iter().map(|s| s.label.class()).collect(), spec)
    }

    pub fn synthetic(task: SynthTask, n: usize, noise: f64, seed: u64, spec: &ArchSpec) -> Result<Self, PipelineError> {
        let (images, labels) = synth_dataset(task, n, spec.input_height.max(spec.input_width), noise, seed);
        Self::from_images(&images, labels, spec)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn gather(&self, idx: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let per = self.x.sample_len();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.x.data()[i * per..(i + 1) * per]);
        }
        let mut shape = self.x.shape().to_vec();
        shape[0] = idx.len();
        (Tensor::new(shape, data).expect("gathered rows match shape"), idx.iter().map(|&i| self.y[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub spec: ArchSpec,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Leading layers kept frozen during training.
    pub freeze: usize,
    /// Stop once eval-mode train accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
    pub median: MedianParams,
    pub clahe: ClaheParams,
    pub split: SplitSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            spec: ArchSpec::default(),
            optimizer: OptimizerKind::adam(1e-3),
            epochs: 50,
            batch_size: 32,
            seed: 0,
            freeze: 0,
            target_train_accuracy: None,
            median: MedianParams::default(),
            clahe: ClaheParams::default(),
            split: SplitSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.spec.validate()?;
        if self.epochs == 0 {
            return Err(PipelineError::Invalid("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(PipelineError::Invalid("batch size must be at least 1".into()));
        }
        if !(self.optimizer.learning_rate() > 0.0) {
            return Err(PipelineError::Invalid("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Every setting that influences a run, one `key=value` per line.
    pub fn digest_text(&self) -> String {
        let mut out = String::new();
        for line in self.spec.canonical_text().lines() {
            let _ = writeln!(out, "arch.{line}");
        }
        match self.optimizer {
            OptimizerKind::Adam { lr, beta1, beta2, epsilon } => {
                let _ = writeln!(out, "optimizer=adam\nlr={lr}\nbeta1={beta1}\nbeta2={beta2}\nepsilon={epsilon}");
            }
            OptimizerKind::SgdMomentum { lr, momentum } => {
                let _ = writeln!(out, "optimizer=sgd\nlr={lr}\nmomentum={momentum}");
            }
        }
        let _ = writeln!(out, "epochs={}\nbatch_size={}\nseed={}\nfreeze={}", self.epochs, self.batch_size, self.seed, self.freeze);
        if let Some(t) = self.target_train_accuracy {
            let _ = writeln!(out, "target_train_accuracy={t}");
        }
        let m = &self.median;
        let mode = match m.mode() {
            MedianMode::Classic => "classic",
            MedianMode::Decision => "decision",
        };
        let _ = writeln!(out, "median=r{} {:?} {mode} t{}", m.radius(), m.border(), m.threshold());
        let c = &self.clahe;
        let _ = writeln!(out, "clahe={}x{} clip{} bins{}", c.tiles_x(), c.tiles_y(), c.clip_limit(), c.bins());
        let s = &self.split;
        let _ = writeln!(out, "split={},{},{} seed{}", s.train, s.val, s.test, s.seed);
        out
    }

    pub fn digest(&self) -> u64 {
        fnv1a64(self.digest_text().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| v.to_string());
        let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for (i, e) in self.epochs.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{},{}", e.train_loss, e.train_accuracy, opt(e.val_loss), opt(e.val_accuracy));
        }
        let _ = writeln!(out, "# best_epoch={}", self.best_epoch);
        out
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

const EVAL_CHUNK: usize = 64;

/// Eval-mode mean loss and accuracy.
pub fn loss_and_accuracy(model: &mut Model<f32>, data: &Dataset) -> Result<(f64, f64), PipelineError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let x = data.x.slice_batch(start, end);
        let logits = model.logits(&x, Mode::Eval, 0)?;
        let labels = &data.y[start..end];
        let (l, _) = softmax_cross_entropy(&logits, labels)?;
        loss += l * (end - start) as f64;
        let k = logits.dim(1);
        for (row, &label) in logits.data().chunks(k).zip(labels) {
            correct += usize::from(argmax(row) == label);
        }
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

/// First index of the largest value.
pub fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

/// Trains a fresh or given model. With a validation set, the weights of the epoch with the
/// highest validation accuracy are kept (earliest epoch on ties); otherwise train accuracy decides.
pub fn train(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    init: Option<Model<f32>>,
) -> Result<(Model<f32>, TrainHistory), PipelineError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(PipelineError::EmptySplit("train"));
    }
    if val_set.is_some_and(Dataset::is_empty) {
        return Err(PipelineError::EmptySplit("val"));
    }
    let mut model = match init {
        Some(m) => {
            if m.spec.spec_hash() != cfg.spec.spec_hash() {
                return Err(TransferError::SpecHashMismatch { expected: cfg.spec.spec_hash(), found: m.spec.spec_hash() }.into());
            }
            m
        }
        None => build_model(&cfg.spec, cfg.seed)?,
    };
    freeze_prefix(&mut model, cfg.freeze)?;
    let mut opt = OptimizerState::new(cfg.optimizer);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Model<f32>)> = None;
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for batch in make_batches(train_set.len(), cfg.batch_size, cfg.seed, epoch as u64, false) {
            let (x, y) = train_set.gather(&batch);
            let trace = model.net.forward(&x, Mode::Train, step)?;
            let (loss, grad) = softmax_cross_entropy(trace.output(), &y)?;
            if !loss.is_finite() {
                return Err(PipelineError::Diverged { epoch, history });
            }
            loss_sum += loss * batch.len() as f64;
            let grads = model.net.backward(&trace, &grad, false)?;
            opt.step(&mut model.net, &grads)?;
            step += 1;
        }
        let (_, train_accuracy) = loss_and_accuracy(&mut model, train_set)?;
        let (val_loss, val_accuracy) = match val_set {
            Some(v) => {
                let (l, a) = loss_and_accuracy(&mut model, v)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        history.epochs.push(EpochStats {
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        let score = val_accuracy.unwrap_or(train_accuracy);
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, model.clone()));
            history.best_epoch = epoch;
        }
        log::debug!("epoch {epoch}: loss {:.4} train acc {train_accuracy:.4} val acc {val_accuracy:?}", loss_sum / train_set.len() as f64);
        if cfg.target_train_accuracy.is_some_and(|t| train_accuracy >= t) {
            break;
        }
    }
    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyConfig {
    pub samples: usize,
    pub noise: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub target_accuracy: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self { samples: 512, noise: 0.1, epochs: 40, batch_size: 32, optimizer: OptimizerKind::adam(2e-3), target_accuracy: 0.9 }
    }
}

/// Trains the backbone on the four-class synthetic shape task until eval-mode train accuracy
/// reaches the target. The returned model has a four-way head.
pub fn pretrain_proxy(spec: &ArchSpec, seed: u64, proxy: &ProxyConfig) -> Result<(Model<f32>, TrainHistory), PipelineError> {
    let mut spec = spec.clone();
    spec.n_classes = SynthTask::Shapes.n_classes();
    let data = Dataset::synthetic(SynthTask::Shapes, proxy.samples, proxy.noise, seed, &spec)?;
    let cfg = TrainConfig {
        spec,
        optimizer: proxy.optimizer,
        epochs: proxy.epochs,
        batch_size: proxy.batch_size,
        seed,
        target_train_accuracy: Some(proxy.target_accuracy),
        ..TrainConfig::default()
    };
    let (model, history) = train(&cfg, &data, None, None)?;
    let reached = history.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    if reached < proxy.target_accuracy {
        return Err(PipelineError::DidNotConverge { target: proxy.target_accuracy, reached, history });
    }
    Ok((model, history))
}

/// Loads a checkpoint as the starting point for `spec`. The checkpoint may differ from `spec`
/// only in its class count, in which case the head is replaced with a fresh one seeded by `seed`.
pub fn init_from_checkpoint(path: &Path, spec: &ArchSpec, seed: u64) -> Result<Model<f32>, PipelineError> {
    let ckpt = read_checkpoint(path)?;
    let mut expected = spec.clone();
    expected.n_classes = ckpt.spec.n_classes;
    if ckpt.spec.spec_hash() != expected.spec_hash() {
        return Err(TransferError::SpecHashMismatch { expected: expected.spec_hash(), found: ckpt.spec.spec_hash() }.into());
    }
    let mut model = ckpt.to_model::<f32>()?;
    if model.spec.n_classes != spec.n_classes {
        replace_head(&mut model, spec.n_classes, seed)?;
    }
    Ok(model)
}
