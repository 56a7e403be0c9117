use std::fmt::Write as _;

use super::train::Dataset;
use super::PipelineError;
use crate::arch::Model;
use crate::metrics::{auc, compute_metrics, confusion_matrix, roc_curve, MetricsError, MetricsReport, RocCurve};

pub const DECISION_THRESHOLD: f64 = 0.5;
pub const PREDICTIONS_HEADER: &str = "index,label,score,prediction";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: bool,
    /// Probability of the positive (significant) class.
    pub score: f64,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Absent when the test set holds a single class.
    pub roc: Option<RocCurve>,
    pub predictions: Vec<Prediction>,
}

impl Evaluation {
    pub fn from_predictions(predictions: Vec<Prediction>) -> Result<Self, PipelineError> {
        let labels: Vec<bool> = predictions.iter().map(|p| p.label).collect();
        let preds: Vec<bool> = predictions.iter().map(|p| p.predicted).collect();
        let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
        let mut report = compute_metrics(&confusion_matrix(&labels, &preds)?);
        let roc = match roc_curve(&labels, &scores) {
            Ok(curve) => {
                report = report.with_auc(auc(&curve));
                Some(curve)
            }
            Err(MetricsError::OneClassOnly) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Self { report, roc, predictions })
    }

    /// One row per sample; scores use shortest round-trip formatting so the file reproduces
    /// every metric exactly.
    pub fn predictions_csv(&self) -> String {
        let mut out = format!("{PREDICTIONS_HEADER}\n");
        for (i, p) in self.predictions.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{}", u8::from(p.label), p.score, u8::from(p.predicted));
        }
        out
    }
}

/// Parses a file written by [`Evaluation::predictions_csv`].
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, PipelineError> {
    let mut rows = text.lines();
    if rows.next() != Some(PREDICTIONS_HEADER) {
        return Err(PipelineError::Invalid("predictions file has an unexpected header".into()));
    }
    rows.filter(|l| !l.is_empty())
        .map(|line| {
            let bad = || PipelineError::Invalid(format!("malformed prediction row {line:?}"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad()),
            };
            Ok(Prediction { label: flag(f[1])?, score: f[2].parse().map_err(|_| bad())?, predicted: flag(f[3])? })
        })
        .collect()
}

/// Positive-class probabilities in eval mode, thresholded at 0.5 for hard predictions.
pub fn evaluate(model: &mut Model<f32>, test: &Dataset) -> Result<Evaluation, PipelineError> {
    if test.is_empty() {
        return Err(PipelineError::EmptySplit("test"));
    }
    if model.spec.n_classes != 2 {
        return Err(PipelineError::Invalid(format!("evaluation needs a two-class head, model has {}", model.spec.n_classes)));
    }
    let mut predictions = Vec::with_capacity(test.len());
    for start in (0..test.len()).step_by(64) {
        let end = (start + 64).min(test.len());
        let probs = model.probabilities(&test.x.slice_batch(start, end))?;
        for (row, &label) in probs.data().chunks(2).zip(&test.y[start..end]) {
            let score = f64::from(row[1]);
            predictions.push(Prediction { label: label == 1, score, predicted: score >= DECISION_THRESHOLD });
        }
    }
    Evaluation::from_predictions(predictions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(label: bool, score: f64) -> Prediction {
        Prediction { label, score, predicted: score >= DECISION_THRESHOLD }
    }

    #[test]
    fn constant_negative_predictor_on_balanced_set() {
        let preds = (0..10).map(|i| p(i % 2 == 0, 0.2)).collect();
        let e = Evaluation::from_predictions(preds).unwrap();
        assert_eq!(e.report.accuracy, 0.5);
        assert_eq!(e.report.sensitivity, 0.0);
        assert_eq!(e.report.specificity, 1.0);
        assert_eq!(e.report.mcc, 0.0);
        assert!(e.report.degenerate.mcc);
        assert_eq!(e.report.auc, Some(0.5));
    }

    #[test]
    fn one_class_omits_roc() {
        let e = Evaluation::from_predictions(vec![p(true, 0.9), p(true, 0.1)]).unwrap();
        assert!(e.roc.is_none());
        assert_eq!(e.report.auc, None);
        assert_eq!(e.report.sensitivity, 0.5);
    }

    #[test]
    fn predictions_file_roundtrips() {
        let preds = vec![p(true, 0.1 + 0.2), p(false, 1.0 / 3.0), p(true, 0.75), p(false, 0.5)];
        let e = Evaluation::from_predictions(preds.clone()).unwrap();
        let back = parse_predictions(&e.predictions_csv()).unwrap();
        assert_eq!(back, preds);
        assert_eq!(Evaluation::from_predictions(back).unwrap(), e);
    }
}
