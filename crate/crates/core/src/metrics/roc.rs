use super::MetricsError;

/// ROC curve as `(fpr, tpr)` points from `(0,0)` to `(1,1)`, both coordinates non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, MetricsError> {
        if points.len() < 2 {
            return Err(MetricsError::InvalidCurve("need at least two points".into()));
        }
        if points[0] != (0.0, 0.0) || *points.last().unwrap() != (1.0, 1.0) {
            return Err(MetricsError::InvalidCurve("must start at (0,0) and end at (1,1)".into()));
        }
        for w in points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if !(x1 >= x0 && y1 >= y0) || !(0.0..=1.0).contains(&x1) || !(0.0..=1.0).contains(&y1) {
                return Err(MetricsError::InvalidCurve(format!("({x0},{y0}) -> ({x1},{y1}) is not monotone")));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// `fpr,tpr` rows followed by a `# auc=<value>` trailer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (x, y) in &self.points {
            out.push_str(&format!("{x},{y}\n"));
        }
        out.push_str(&format!("# auc={}\n", auc(self)));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut points = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') || line == "fpr,tpr" {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| MetricsError::InvalidCurve(format!("bad row {line:?}")))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| MetricsError::InvalidCurve(format!("bad number {s:?}")))
            };
            points.push((parse(a)?, parse(b)?));
        }
        Self::new(points)
    }
}

/// Sweeps thresholds over the distinct scores in descending order. Tied scores move the curve
/// in one combined (diagonal) step.
pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Result<RocCurve, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), preds: scores.len() });
    }
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::InvalidScore(i));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    RocCurve::new(points)
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve.points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let c = roc_curve(&[true, true, false, false], &[0.9, 0.8, 0.3, 0.1]).unwrap();
        assert!(c.points().contains(&(0.0, 1.0)));
        assert_eq!(auc(&c), 1.0);
    }

    #[test]
    fn all_tied_is_the_diagonal() {
        let c = roc_curve(&[true, false, true, false], &[0.5; 4]).unwrap();
        assert_eq!(c.points(), &[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&c), 0.5);
    }

    #[test]
    fn stepwise_three_quarters() {
        let c = roc_curve(&[true, false, true, false], &[0.9, 0.6, 0.4, 0.1]).unwrap();
        assert_eq!(c.points(), &[(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(auc(&c), 0.75);
    }

    #[test]
    fn hand_built_curves() {
        assert_eq!(auc(&RocCurve::new(vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).unwrap()), 1.0);
        assert_eq!(auc(&RocCurve::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap()), 0.5);
        assert!(RocCurve::new(vec![(0.0, 0.0), (0.5, 0.6), (0.4, 0.7), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn one_class_is_rejected() {
        assert_eq!(roc_curve(&[true, true], &[0.1, 0.2]), Err(MetricsError::OneClassOnly));
        assert_eq!(roc_curve(&[true, false], &[0.1, f64::NAN]), Err(MetricsError::InvalidScore(1)));
    }

    #[test]
    fn csv_roundtrip() {
        let c = roc_curve(&[true, false, true, false, true], &[0.9, 0.6, 0.4, 0.1, 0.35]).unwrap();
        let text = c.to_csv();
        assert!(text.ends_with(&format!("# auc={}\n", auc(&c))));
        assert_eq!(RocCurve::from_csv(&text).unwrap(), c);
    }
}
