use std::collections::HashMap;

use kgprompt_core::backend::PredictionRecord;
use kgprompt_core::eval::{aggregate_folds, compute_metrics, Confusion, Metrics, StdMode};
use kgprompt_core::ClassLabel;
use proptest::prelude::*;

fn label(b: bool) -> ClassLabel {
    if b {
        ClassLabel::Causal
    } else {
        ClassLabel::NonCausal
    }
}

fn fixture(pairs: &[(bool, bool)]) -> (Vec<PredictionRecord>, HashMap<String, ClassLabel>) {
    let preds = pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, _))| PredictionRecord {
            instance_id: format!("i{i}"),
            predicted: label(p),
            score: None,
            backend: "t".into(),
        })
        .collect();
    let golds = pairs.iter().enumerate().map(|(i, &(_, g))| (format!("i{i}"), label(g))).collect();
    (preds, golds)
}

/// Direct count over (prediction, gold) pairs.
fn brute(pairs: &[(bool, bool)]) -> (f64, f64, f64) {
    let tp = pairs.iter().filter(|&&(p, g)| p && g).count() as f64;
    let pp = pairs.iter().filter(|&&(p, _)| p).count() as f64;
    let gp = pairs.iter().filter(|&&(_, g)| g).count() as f64;
    let p = if pp == 0.0 { 0.0 } else { tp / pp };
    let r = if gp == 0.0 { 0.0 } else { tp / gp };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_match_brute_force(pairs in prop::collection::vec(any::<(bool, bool)>(), 1..60)) {
        let (preds, golds) = fixture(&pairs);
        let m = compute_metrics(&preds, &golds).unwrap();
        let (p, r, f) = brute(&pairs);
        prop_assert!((m.precision - p).abs() < 1e-9);
        prop_assert!((m.recall - r).abs() < 1e-9);
        prop_assert!((m.f1 - f).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn permutation_invariance(pairs in prop::collection::vec(any::<(bool, bool)>(), 1..60), shift in any::<prop::sample::Index>()) {
        let (mut preds, golds) = fixture(&pairs);
        let before = compute_metrics(&preds, &golds).unwrap();
        let k = shift.index(preds.len());
        preds.rotate_left(k);
        preds.reverse();
        prop_assert_eq!(compute_metrics(&preds, &golds).unwrap(), before);
    }

    #[test]
    fn label_swap_duality(pairs in prop::collection::vec(any::<(bool, bool)>(), 1..60)) {
        let (preds, golds) = fixture(&pairs);
        let swapped: Vec<(bool, bool)> = pairs.iter().map(|&(p, g)| (!p, !g)).collect();
        let (spreds, sgolds) = fixture(&swapped);
        let a = compute_metrics(&preds, &golds).unwrap().confusion.unwrap();
        let b = compute_metrics(&spreds, &sgolds).unwrap().confusion.unwrap();
        prop_assert_eq!(b, Confusion { tp: a.tn, fp: a.fn_, fn_: a.fp, tn: a.tp });
    }

    #[test]
    fn aggregate_matches_recomputation(f1s in prop::collection::vec(0.0f64..=1.0, 1..10)) {
        let ms: Vec<Metrics> = f1s
            .iter()
            .map(|&f| Metrics { precision: f, recall: f, f1: f, degenerate_flags: Default::default(), confusion: None })
            .collect();
        let r = aggregate_folds(&ms, StdMode::Population).unwrap();
        let n = f1s.len() as f64;
        let mean = f1s.iter().sum::<f64>() / n;
        let var = f1s.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
        prop_assert!((r.mean.f1 - mean).abs() < 1e-12);
        prop_assert!((r.f1_std - var.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn hand_case() {
    let m = Metrics::from_confusion(Confusion { tp: 3, fp: 1, fn_: 2, tn: 0 });
    assert!((m.precision - 0.75).abs() < 1e-12);
    assert!((m.recall - 0.6).abs() < 1e-12);
    assert!((m.f1 - 0.6667).abs() < 5e-5);
}
