//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [preprocess]  median_radius median_border median_mode median_threshold
//!               clahe_tiles_x clahe_tiles_y clahe_clip clahe_bins on_load
//! [arch]        variant input_height input_width input_channels width_multiplier
//!               block_counts residual_scale dropout n_classes
//! [train]       optimizer lr momentum epochs batch_size seed freeze target_train_accuracy
//! [split]       train val test
//! [proxy]       samples noise epochs batch_size lr target_accuracy
//! [paths]       manifest checkpoint init predictions
//! [compare]     models pretrain sort_by_auc
//! ```
//!
//! Unknown sections and keys are errors. Relative paths are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use prostapipe::arch::{ArchSpec, Variant};
use prostapipe::imgproc::{BorderPolicy, ClaheParams, MedianParams};
use prostapipe::nn::OptimizerKind;
use prostapipe::pipeline::{ProxyConfig, TrainConfig};

use crate::CliError;

pub const SCHEMA: &[(&str, &[&str])] = &[
    (
        "preprocess",
        &[
            "median_radius",
            "median_border",
            "median_mode",
            "median_threshold",
            "clahe_tiles_x",
            "clahe_tiles_y",
            "clahe_clip",
            "clahe_bins",
            "on_load",
        ],
    ),
    (
        "arch",
        &[
            "variant",
            "input_height",
            "input_width",
            "input_channels",
            "width_multiplier",
            "block_counts",
            "residual_scale",
            "dropout",
            "n_classes",
        ],
    ),
    ("train", &["optimizer", "lr", "momentum", "epochs", "batch_size", "seed", "freeze", "target_train_accuracy"]),
    ("split", &["train", "val", "test"]),
    ("proxy", &["samples", "noise", "epochs", "batch_size", "lr", "target_accuracy"]),
    ("paths", &["manifest", "checkpoint", "init", "predictions"]),
    ("compare", &["models", "pretrain", "sort_by_auc"]),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSettings {
    pub models: Vec<Variant>,
    pub pretrain: bool,
    pub sort_by_auc: bool,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self { models: Variant::ALL.to_vec(), pretrain: false, sort_by_auc: false }
    }
}

/// Everything a subcommand may need, after defaults and the config file are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Seed from the file, if it set one.
    pub seed: Option<u64>,
    /// Apply median + CLAHE when images are loaded for training and evaluation.
    pub preprocess_on_load: bool,
    pub proxy: ProxyConfig,
    pub paths: Paths,
    pub compare: CompareSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            seed: None,
            preprocess_on_load: false,
            proxy: ProxyConfig::default(),
            paths: Paths::default(),
            compare: CompareSettings::default(),
        }
    }
}

fn bad(section: &str, key: &str, value: &str, expected: &str) -> CliError {
    CliError::Config(format!("[{section}] {key} = {value:?}: expected {expected}"))
}

fn num<T: FromStr>(section: &str, key: &str, value: &str, expected: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad(section, key, value, expected))
}

fn flag(section: &str, key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(section, key, value, "true or false")),
    }
}

/// Raw preprocessing fields; validated together once the whole file is read.
struct PreprocessFields {
    radius: usize,
    border: BorderPolicy,
    classic: bool,
    threshold: u32,
    tiles_x: usize,
    tiles_y: usize,
    clip: f64,
    bins: usize,
}

impl PreprocessFields {
    fn from_params(m: &MedianParams, c: &ClaheParams) -> Self {
        Self {
            radius: m.radius(),
            border: m.border(),
            classic: m.mode() == prostapipe::imgproc::MedianMode::Classic,
            threshold: m.threshold(),
            tiles_x: c.tiles_x(),
            tiles_y: c.tiles_y(),
            clip: c.clip_limit(),
            bins: c.bins(),
        }
    }
}

#[derive(Default)]
struct OptimizerFields {
    name: Option<String>,
    lr: Option<f64>,
    momentum: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = RunConfig::default();
        let mut pre = PreprocessFields::from_params(&cfg.train.median, &cfg.train.clahe);
        let mut opt = OptimizerFields::default();
        let mut proxy_lr = None;
        let mut split = cfg.train.split;

        for (section, props) in &ini {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(CliError::Config(format!("key {key:?} appears before any [section]")));
                }
                continue;
            };
            let Some((_, keys)) = SCHEMA.iter().find(|(name, _)| *name == section) else {
                return Err(CliError::Config(format!("unknown section [{section}]")));
            };
            for (key, value) in props.iter() {
                if !keys.contains(&key) {
                    return Err(CliError::Config(format!("unknown key {key:?} in [{section}]")));
                }
                let v = strip_comment(value);
                let path = || Some(base.join(v));
                match (section, key) {
                    ("preprocess", "median_radius") => pre.radius = num(section, key, v, "a non-negative integer")?,
                    ("preprocess", "median_border") => {
                        pre.border = match v {
                            "replicate" => BorderPolicy::Replicate,
                            "reflect" => BorderPolicy::Reflect,
                            _ => return Err(bad(section, key, v, "replicate or reflect")),
                        }
                    }
                    ("preprocess", "median_mode") => {
                        pre.classic = match v {
                            "classic" => true,
                            "decision" => false,
                            _ => return Err(bad(section, key, v, "classic or decision")),
                        }
                    }
                    ("preprocess", "median_threshold") => pre.threshold = num(section, key, v, "a non-negative integer")?,
                    ("preprocess", "clahe_tiles_x") => pre.tiles_x = num(section, key, v, "a positive integer")?,
                    ("preprocess", "clahe_tiles_y") => pre.tiles_y = num(section, key, v, "a positive integer")?,
                    ("preprocess", "clahe_clip") => pre.clip = num(section, key, v, "a number")?,
                    ("preprocess", "clahe_bins") => pre.bins = num(section, key, v, "a positive integer")?,
                    ("preprocess", "on_load") => cfg.preprocess_on_load = flag(section, key, v)?,

                    ("arch", "variant") => cfg.train.spec.variant = v.parse().map_err(|_| bad(section, key, v, &variant_list()))?,
                    ("arch", "input_height") => cfg.train.spec.input_height = num(section, key, v, "a positive integer")?,
                    ("arch", "input_width") => cfg.train.spec.input_width = num(section, key, v, "a positive integer")?,
                    ("arch", "input_channels") => cfg.train.spec.input_channels = num(section, key, v, "a positive integer")?,
                    ("arch", "width_multiplier") => cfg.train.spec.width_multiplier = num(section, key, v, "a number")?,
                    ("arch", "block_counts") => {
                        cfg.train.spec.block_counts = v
                            .split(',')
                            .map(|p| num(section, key, p.trim(), "comma-separated integers"))
                            .collect::<Result<_, _>>()?
                    }
                    ("arch", "residual_scale") => cfg.train.spec.residual_scale = num(section, key, v, "a number")?,
                    ("arch", "dropout") => cfg.train.spec.dropout = num(section, key, v, "a number")?,
                    ("arch", "n_classes") => cfg.train.spec.n_classes = num(section, key, v, "an integer")?,

                    ("train", "optimizer") => opt.name = Some(v.to_string()),
                    ("train", "lr") => opt.lr = Some(num(section, key, v, "a number")?),
                    ("train", "momentum") => opt.momentum = Some(num(section, key, v, "a number")?),
                    ("train", "epochs") => cfg.train.epochs = num(section, key, v, "a positive integer")?,
                    ("train", "batch_size") => cfg.train.batch_size = num(section, key, v, "a positive integer")?,
                    ("train", "seed") => cfg.seed = Some(num(section, key, v, "an unsigned integer")?),
                    ("train", "freeze") => cfg.train.freeze = num(section, key, v, "a non-negative integer")?,
                    ("train", "target_train_accuracy") => {
                        cfg.train.target_train_accuracy = Some(num(section, key, v, "a number")?)
                    }

                    ("split", "train") => split.train = num(section, key, v, "a fraction")?,
                    ("split", "val") => split.val = num(section, key, v, "a fraction")?,
                    ("split", "test") => split.test = num(section, key, v, "a fraction")?,

                    ("proxy", "samples") => cfg.proxy.samples = num(section, key, v, "a positive integer")?,
                    ("proxy", "noise") => cfg.proxy.noise = num(section, key, v, "a number")?,
                    ("proxy", "epochs") => cfg.proxy.epochs = num(section, key, v, "a positive integer")?,
                    ("proxy", "batch_size") => cfg.proxy.batch_size = num(section, key, v, "a positive integer")?,
                    ("proxy", "lr") => proxy_lr = Some(num(section, key, v, "a number")?),
                    ("proxy", "target_accuracy") => cfg.proxy.target_accuracy = num(section, key, v, "a number")?,

                    ("paths", "manifest") => cfg.paths.manifest = path(),
                    ("paths", "checkpoint") => cfg.paths.checkpoint = path(),
                    ("paths", "init") => cfg.paths.init = path(),
                    ("paths", "predictions") => cfg.paths.predictions = path(),

                    ("compare", "models") => {
                        cfg.compare.models = v
                            .split(',')
                            .map(|m| m.trim().parse().map_err(|_| bad(section, key, m, &variant_list())))
                            .collect::<Result<_, _>>()?
                    }
                    ("compare", "pretrain") => cfg.compare.pretrain = flag(section, key, v)?,
                    ("compare", "sort_by_auc") => cfg.compare.sort_by_auc = flag(section, key, v)?,
                    _ => unreachable!("schema and match arms disagree on [{section}] {key}"),
                }
            }
        }

        cfg.train.median = if pre.classic {
            MedianParams::classic(pre.radius, pre.border)
        } else {
            MedianParams::decision(pre.radius, pre.border, pre.threshold)
        };
        cfg.train.median.validate(256).map_err(|e| CliError::Config(format!("[preprocess] {e}")))?;
        cfg.train.clahe = ClaheParams::new(pre.tiles_x, pre.tiles_y, pre.clip, pre.bins)
            .map_err(|e| CliError::Config(format!("[preprocess] {e}")))?;

        cfg.train.optimizer = match opt.name.as_deref().unwrap_or("adam") {
            "adam" => {
                if opt.momentum.is_some() {
                    return Err(CliError::Config("[train] momentum only applies to optimizer = sgd".into()));
                }
                OptimizerKind::adam(opt.lr.unwrap_or(1e-3))
            }
            "sgd" => OptimizerKind::sgd(opt.lr.unwrap_or(1e-2), opt.momentum.unwrap_or(0.9)),
            other => return Err(bad("train", "optimizer", other, "adam or sgd")),
        };
        if let Some(lr) = proxy_lr {
            cfg.proxy.optimizer = OptimizerKind::adam(lr);
        }
        cfg.train.split = split;
        cfg.train.split.validate().map_err(|e| CliError::Config(format!("[split] {e}")))?;
        cfg.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.compare.models.is_empty() {
            return Err(CliError::Config("[compare] models must list at least one variant".into()));
        }
        Ok(cfg)
    }

    /// Fixes the run seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.train.split.seed = seed;
        self
    }
}

fn variant_list() -> String {
    Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
}

/// The effective spec for a variant, keeping every other architecture setting.
pub fn spec_for(base: &ArchSpec, variant: Variant) -> ArchSpec {
    ArchSpec { variant, ..base.clone() }
}

/// Drops a trailing `; comment` or `# comment` (the marker must follow whitespace).
fn strip_comment(value: &str) -> &str {
    let cut = value
        .char_indices()
        .find(|&(i, c)| (c == ';' || c == '#') && value[..i].ends_with(char::is_whitespace))
        .map_or(value.len(), |(i, _)| i);
    value[..cut].trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(text, Path::new("/cfg"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn every_section_is_read() {
        let cfg = parse(
            "[preprocess]\nmedian_mode = classic\nmedian_radius = 2\nclahe_tiles_x = 4\non_load = true\n\
             [arch]\nvariant = mini_resnet\nblock_counts = 1, 3\n\
             [train]\noptimizer = sgd\nlr = 0.05\nepochs = 7\nseed = 9\n\
             [split]\ntrain = 0.6\nval = 0.2\ntest = 0.2\n\
             [proxy]\nlr = 0.01\n\
             [paths]\nmanifest = data/m.csv\n\
             [compare]\nmodels = mini_resnet,mini_inception_v3\nsort_by_auc = yes\n",
        )
        .unwrap();
        assert_eq!(cfg.train.median, MedianParams::classic(2, BorderPolicy::Replicate));
        assert_eq!(cfg.train.clahe.tiles_x(), 4);
        assert!(cfg.preprocess_on_load);
        assert_eq!(cfg.train.spec.variant, Variant::MiniResnet);
        assert_eq!(cfg.train.spec.block_counts, vec![1, 3]);
        assert_eq!(cfg.train.optimizer, OptimizerKind::sgd(0.05, 0.9));
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.train.split.val, 0.2);
        assert_eq!(cfg.proxy.optimizer, OptimizerKind::adam(0.01));
        assert_eq!(cfg.paths.manifest, Some(PathBuf::from("/cfg/data/m.csv")));
        assert_eq!(cfg.compare.models, vec![Variant::MiniResnet, Variant::MiniInceptionV3]);
        assert!(cfg.compare.sort_by_auc);
    }

    #[test]
    fn inline_comments_are_ignored() {
        let cfg = RunConfig::parse("[preprocess]\nmedian_border = reflect   ; or replicate\n[train]\nepochs = 7 # short\n", Path::new(".")).unwrap();
        assert_eq!(cfg.train.median.border(), BorderPolicy::Reflect);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(strip_comment("a#b"), "a#b");
    }

    #[test]
    fn unknown_names_are_rejected() {
        for text in ["[train]\nepoch = 3\n", "[training]\nepochs = 3\n", "epochs = 3\n", "[arch]\nvariant = vgg\n"] {
            assert!(matches!(parse(text), Err(CliError::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[train]\nepochs = many\n",
            "[train]\nepochs = 0\n",
            "[split]\ntrain = 0.9\n",
            "[preprocess]\nclahe_tiles_x = 0\n",
            "[train]\nmomentum = 0.5\n",
            "[compare]\npretrain = maybe\n",
        ] {
            assert!(matches!(parse(text), Err(CliError::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn every_schema_key_is_accepted() {
        for (section, keys) in SCHEMA {
            for key in *keys {
                let value = match (*section, *key) {
                    ("arch", "variant") => "mini_resnet",
                    ("arch", "block_counts") => "2",
                    ("compare", "models") => "mini_resnet",
                    ("preprocess", "median_border") => "reflect",
                    ("preprocess", "median_mode") => "decision",
                    ("preprocess", "on_load") | ("compare", _) => "false",
                    ("train", "optimizer") => "adam",
                    ("train", "momentum") => continue,
                    ("paths", _) => "x",
                    ("split", "train") => "0.8",
                    ("split", "val") => "0",
                    ("split", "test") => "0.2",
                    ("arch", "residual_scale") | ("arch", "dropout") => "0.1",
                    ("arch", "n_classes") => "2",
                    ("arch", "width_multiplier") | ("preprocess", "clahe_clip") => "1.5",
                    (_, "lr") => "0.001",
                    (_, "target_train_accuracy") | (_, "target_accuracy") | (_, "noise") => "0.9",
                    _ => "3",
                };
                let text = format!("[{section}]\n{key} = {value}\n");
                assert!(parse(&text).is_ok(), "{text:?}: {:?}", parse(&text));
            }
        }
    }
}
