mod oracles;

use proptest::prelude::*;
use prostapipe::metrics::{auc, compute_metrics, confusion_matrix, f1_score, mcc, roc_curve, ConfusionMatrix};

fn non_constant_pair() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (2usize..=200)
        .prop_flat_map(|n| (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n)))
        .prop_filter("both sequences must vary", |(a, b)| {
            a.iter().any(|&v| v) && a.iter().any(|&v| !v) && b.iter().any(|&v| v) && b.iter().any(|&v| !v)
        })
}

fn labelled_scores() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..=120)
        .prop_flat_map(|n| {
            // Scores drawn from a small grid so ties are common.
            (prop::collection::vec(any::<bool>(), n), prop::collection::vec(0u8..12, n))
        })
        .prop_filter("both classes present", |(l, _)| l.iter().any(|&v| v) && l.iter().any(|&v| !v))
        .prop_map(|(l, s)| (l, s.into_iter().map(|v| f64::from(v) / 11.0).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mcc_is_pearson_of_the_binary_vectors((labels, preds) in non_constant_pair()) {
        let cm = confusion_matrix(&labels, &preds).unwrap();
        let (m, degenerate) = mcc(&cm);
        prop_assert!(!degenerate);
        prop_assert!((m - oracles::pearson(&labels, &preds)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn trapezoid_auc_is_pairwise_concordance((labels, scores) in labelled_scores()) {
        let curve = roc_curve(&labels, &scores).unwrap();
        let a = auc(&curve);
        prop_assert!((a - oracles::concordance(&labels, &scores)).abs() <= 1e-12, "auc {a}");
        for w in curve.points().windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn negated_scores_mirror_the_auc((labels, scores) in labelled_scores()) {
        let a = auc(&roc_curve(&labels, &scores).unwrap());
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = auc(&roc_curve(&labels, &neg).unwrap());
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn report_is_internally_consistent(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let cm = ConfusionMatrix::new(tp, fp, tn, fn_).unwrap();
        let r = compute_metrics(&cm);
        for v in [r.accuracy, r.precision, r.sensitivity, r.specificity, r.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-1.0..=1.0).contains(&r.mcc));
        if r.precision + r.sensitivity > 0.0 {
            let harmonic = 2.0 / (1.0 / r.precision + 1.0 / r.sensitivity);
            prop_assert!((r.f1 - harmonic).abs() <= 1e-9);
        }
        let s = compute_metrics(&cm.swapped());
        prop_assert_eq!(s.sensitivity, r.specificity);
        prop_assert_eq!(s.specificity, r.sensitivity);
        prop_assert!((s.mcc - r.mcc).abs() <= 1e-12);
        prop_assert_eq!(s.accuracy, r.accuracy);
    }
}

// Exact confusion matrices whose precision and recall equal the published rows.
#[test]
fn published_rows_reproduce_their_f1() {
    // precision 187/200 = 0.935, recall 421/500 = 0.842
    let r = compute_metrics(&ConfusionMatrix::new(78_727, 5_473, 10_000, 14_773).unwrap());
    assert!((r.precision - 0.935).abs() < 1e-12 && (r.sensitivity - 0.842).abs() < 1e-12);
    assert!((r.f1 - 0.886).abs() <= 0.001, "f1 {}", r.f1);

    // precision 899/1000, recall 74/125 = 0.592
    let r = compute_metrics(&ConfusionMatrix::new(66_526, 7_474, 10_000, 45_849).unwrap());
    assert!((r.precision - 0.899).abs() < 1e-12 && (r.sensitivity - 0.592).abs() < 1e-12);
    assert!((r.f1 - 0.714).abs() <= 0.001, "f1 {}", r.f1);
}

#[test]
fn published_inception_v3_f1_does_not_follow_from_its_row() {
    let f1 = f1_score(0.924, 0.80);
    assert!((f1 - 0.858).abs() <= 0.001, "f1 {f1}");
    assert!((f1 - 0.847).abs() > 0.01);
}
