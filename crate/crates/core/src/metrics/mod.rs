//! Binary classification metrics: confusion matrix, accuracy, precision, sensitivity,
//! specificity, F1, Matthews correlation and ROC/AUC.
//!
//! The positive class (`true`) is "clinically significant".

mod report;
mod roc;

use thiserror::Error;

pub use self::report::{Degeneracy, MetricsReport, CSV_HEADER};
pub use self::roc::{auc, roc_curve, RocCurve};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("labels and predictions differ in length ({labels} vs {preds})")]
    LengthMismatch { labels: usize, preds: usize },
    #[error("no samples")]
    EmptyInput,
    #[error("ROC is undefined unless both classes are present")]
    OneClassOnly,
    #[error("score at index {0} is not a number")]
    InvalidScore(usize),
    #[error("malformed ROC curve: {0}")]
    InvalidCurve(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Result<Self, MetricsError> {
        if tp + fp + tn + fn_ == 0 {
            return Err(MetricsError::EmptyInput);
        }
        Ok(Self { tp, fp, tn, fn_ })
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same outcomes with the class convention flipped.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }
}

pub fn confusion_matrix(labels: &[bool], preds: &[bool]) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != preds.len() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), preds: preds.len() });
    }
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&l, &p) in labels.iter().zip(preds) {
        match (l, p) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * (recall * precision) / (recall + precision)
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> (f64, bool) {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 {
        (0.0, true)
    } else {
        ((tp * tn - fp * fn_) / den, false)
    }
}

/// All scalar metrics for `cm`. AUC is left unset; zero denominators yield 0 and raise a flag.
pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let (accuracy, _) = ratio(cm.tp + cm.tn, cm.total());
    let (precision, d_prec) = ratio(cm.tp, cm.tp + cm.fp);
    let (sensitivity, d_rec) = ratio(cm.tp, cm.tp + cm.fn_);
    let (specificity, d_spec) = ratio(cm.tn, cm.tn + cm.fp);
    let f1 = f1_score(precision, sensitivity);
    let (mcc, d_mcc) = mcc(cm);
    MetricsReport {
        accuracy,
        precision,
        sensitivity,
        specificity,
        f1,
        mcc,
        auc: None,
        degenerate: Degeneracy {
            precision: d_prec,
            sensitivity: d_rec,
            specificity: d_spec,
            f1: precision + sensitivity == 0.0,
            mcc: d_mcc,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[true, true, false, false], &[true, true, false, false]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2, fp: 0, tn: 2, fn_: 0 });
        let cm = confusion_matrix(&[true, true, true, false, false], &[true, false, true, true, false]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2, fp: 1, tn: 1, fn_: 1 });
        let cm = confusion_matrix(&[true, false], &[true, true]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 1, tn: 0, fn_: 0 });
    }

    #[test]
    fn confusion_errors() {
        assert_eq!(confusion_matrix(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(
            confusion_matrix(&[true], &[true, false]),
            Err(MetricsError::LengthMismatch { labels: 1, preds: 2 })
        );
        assert_eq!(ConfusionMatrix::new(0, 0, 0, 0), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn worked_example() {
        let r = compute_metrics(&ConfusionMatrix { tp: 4, tn: 3, fp: 1, fn_: 2 });
        assert!((r.accuracy - 0.7).abs() < 1e-12);
        assert!((r.precision - 0.8).abs() < 1e-12);
        assert!((r.sensitivity - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.specificity - 0.75).abs() < 1e-12);
        assert!((r.f1 - 8.0 / 11.0).abs() < 1e-12);
        // (12 - 2) / sqrt(5 * 6 * 4 * 5)
        assert!((r.mcc - 10.0 / 600f64.sqrt()).abs() < 1e-12);
        assert!((r.mcc - 0.4082).abs() < 5e-5);
        assert!(!r.degenerate.any());
    }

    #[test]
    fn constant_negative_predictor_is_flagged() {
        let labels = [true, true, false, false];
        let cm = confusion_matrix(&labels, &[false; 4]).unwrap();
        let r = compute_metrics(&cm);
        assert_eq!((r.accuracy, r.sensitivity, r.specificity, r.mcc), (0.5, 0.0, 1.0, 0.0));
        assert!(r.degenerate.mcc && r.degenerate.precision);
    }

    #[test]
    fn swapping_classes() {
        let cm = ConfusionMatrix { tp: 7, fp: 2, tn: 5, fn_: 3 };
        let a = compute_metrics(&cm);
        let b = compute_metrics(&cm.swapped());
        assert!((a.mcc - b.mcc).abs() < 1e-15);
        assert_eq!(a.sensitivity, b.specificity);
        assert_eq!(a.specificity, b.sensitivity);
    }
}
