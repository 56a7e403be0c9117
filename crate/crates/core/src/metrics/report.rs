use std::fmt::Write as _;

/// Column order of the comparison table.
pub const CSV_HEADER: &str = "model,accuracy,precision,sensitivity,specificity,f1,mcc,auc";

/// Which metrics hit a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Degeneracy {
    pub precision: bool,
    pub sensitivity: bool,
    pub specificity: bool,
    pub f1: bool,
    pub mcc: bool,
}

impl Degeneracy {
    pub fn any(&self) -> bool {
        self.precision || self.sensitivity || self.specificity || self.f1 || self.mcc
    }

    fn names(&self) -> Vec<&'static str> {
        [
            (self.precision, "precision"),
            (self.sensitivity, "sensitivity"),
            (self.specificity, "specificity"),
            (self.f1, "f1"),
            (self.mcc, "mcc"),
        ]
        .into_iter()
        .filter_map(|(flag, name)| flag.then_some(name))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Unset when the ROC curve is undefined (single class present).
    pub auc: Option<f64>,
    pub degenerate: Degeneracy,
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "nan".to_string(), |a| a.to_string())
}

impl MetricsReport {
    pub fn with_auc(mut self, auc: f64) -> Self {
        self.auc = Some(auc);
        self
    }

    /// Flat `key=value` block. Values use the shortest round-trip float representation.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy={}", self.accuracy);
        let _ = writeln!(s, "precision={}", self.precision);
        let _ = writeln!(s, "sensitivity={}", self.sensitivity);
        let _ = writeln!(s, "specificity={}", self.specificity);
        let _ = writeln!(s, "f1={}", self.f1);
        let _ = writeln!(s, "mcc={}", self.mcc);
        let _ = writeln!(s, "auc={}", fmt_auc(self.auc));
        let _ = writeln!(s, "degenerate={}", self.degenerate.names().join(","));
        s
    }

    /// One row under [`CSV_HEADER`].
    pub fn csv_row(&self, model: &str) -> String {
        format!(
            "{model},{},{},{},{},{},{},{}",
            self.accuracy,
            self.precision,
            self.sensitivity,
            self.specificity,
            self.f1,
            self.mcc,
            fmt_auc(self.auc)
        )
    }
}
