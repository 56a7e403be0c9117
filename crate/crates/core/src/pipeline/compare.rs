use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::evaluate::{evaluate, Evaluation};
use super::train::{pretrain_proxy, train, Dataset, ProxyConfig, TrainConfig, TrainHistory};
use super::PipelineError;
use crate::arch::Model;
use crate::metrics::CSV_HEADER;
use crate::transfer::replace_head;

/// One model to train and score.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub name: String,
    pub cfg: TrainConfig,
    /// Pretrain on the synthetic proxy task first, then replace the head.
    pub proxy: Option<ProxyConfig>,
}

pub struct ExperimentData {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
}

#[derive(Debug, Clone)]
pub struct ModelResult {
    pub name: String,
    pub digest_text: String,
    pub digest: u64,
    pub outcome: Result<(Evaluation, TrainHistory), String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub results: Vec<ModelResult>,
}

/// Optional proxy pretraining, training, then evaluation on the test set.
pub fn run_model(run: &ModelRun, data: &ExperimentData) -> Result<(Model<f32>, TrainHistory, Evaluation), PipelineError> {
    let init = match &run.proxy {
        Some(proxy) => {
            let (mut m, _) = pretrain_proxy(&run.cfg.spec, run.cfg.seed, proxy)?;
            replace_head(&mut m, run.cfg.spec.n_classes, run.cfg.seed)?;
            Some(m)
        }
        None => None,
    };
    let (mut model, history) = train(&run.cfg, &data.train, data.val.as_ref(), init)?;
    let eval = evaluate(&mut model, &data.test)?;
    Ok((model, history, eval))
}

/// Trains and evaluates every run on up to `workers` threads. A failing run is recorded and the
/// others continue; results keep the order of `runs`.
pub fn compare_models(runs: &[ModelRun], data: &ExperimentData, workers: usize) -> Result<ExperimentReport, PipelineError> {
    if runs.is_empty() {
        return Err(PipelineError::Invalid("nothing to compare".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let results = pool.install(|| {
        runs.par_iter()
            .map(|run| {
                let outcome = run_model(run, data).map(|(_, h, e)| (e, h)).map_err(|e| {
                    log::error!("{}: {e}", run.name);
                    e.to_string()
                });
                ModelResult { name: run.name.clone(), digest_text: run.cfg.digest_text(), digest: run.cfg.digest(), outcome }
            })
            .collect()
    });
    Ok(ExperimentReport { results })
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

impl ExperimentReport {
    /// Indices of results by descending AUC; failed runs and missing AUCs last, ties by position.
    pub fn order_by_auc(&self) -> Vec<usize> {
        let key = |i: usize| match &self.results[i].outcome {
            Ok((e, _)) => e.report.auc.unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        };
        let mut idx: Vec<usize> = (0..self.results.len()).collect();
        idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
        idx
    }

    fn order(&self, sort_by_auc: bool) -> Vec<usize> {
        if sort_by_auc {
            self.order_by_auc()
        } else {
            (0..self.results.len()).collect()
        }
    }

    pub fn csv(&self, sort_by_auc: bool) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for i in self.order(sort_by_auc) {
            if let Ok((e, _)) = &self.results[i].outcome {
                let _ = writeln!(out, "{}", e.report.csv_row(&self.results[i].name));
            }
        }
        out
    }

    pub fn text(&self, sort_by_auc: bool) -> String {
        let mut out = String::new();
        out.push_str("# Backbone pretraining, where enabled, uses a synthetic shape task in place of large-scale natural-image pretraining.\n");
        out.push_str("# Metrics come from a single patient-level split; scalar metrics use a 0.5 threshold, AUC sweeps all thresholds.\n");
        for r in &self.results {
            let settings: Vec<&str> = r.digest_text.lines().collect();
            let _ = writeln!(out, "# {} digest={:016x} {}", r.name, r.digest, settings.join(" "));
        }
        let width = self.results.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let cols = ["Accuracy", "Precision", "Sensitivity", "Specificity", "F1-score", "MCC", "AUC"];
        let _ = write!(out, "{:<width$}", "Model");
        for c in cols {
            let _ = write!(out, " {c:>11}");
        }
        out.push('\n');
        for i in self.order(sort_by_auc) {
            let r = &self.results[i];
            let _ = write!(out, "{:<width$}", r.name);
            match &r.outcome {
                Ok((e, _)) => {
                    let m = &e.report;
                    let auc = m.auc.map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
                    for v in [m.accuracy, m.precision, m.sensitivity, m.specificity, m.f1, m.mcc] {
                        let _ = write!(out, " {v:>11.4}");
                    }
                    let _ = write!(out, " {auc:>11}");
                    if m.degenerate.any() {
                        out.push_str("  (degenerate)");
                    }
                }
                Err(msg) => {
                    let _ = write!(out, " failed: {msg}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `report.txt`, `report.csv` and, per successful model, `roc_<model>.csv` and
    /// `predictions_<model>.csv`.
    pub fn write(&self, dir: &Path, sort_by_auc: bool) -> Result<Vec<PathBuf>, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let mut files = vec![(dir.join("report.txt"), self.text(sort_by_auc)), (dir.join("report.csv"), self.csv(sort_by_auc))];
        for r in &self.results {
            if let Ok((e, _)) = &r.outcome {
                let name = file_safe(&r.name);
                if let Some(roc) = &e.roc {
                    files.push((dir.join(format!("roc_{name}.csv")), roc.to_csv()));
                }
                files.push((dir.join(format!("predictions_{name}.csv")), e.predictions_csv()));
            }
        }
        for (path, text) in &files {
            fs::write(path, text).map_err(|e| PipelineError::io(path, e))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}
