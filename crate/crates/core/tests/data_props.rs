use std::collections::{HashMap, HashSet};
use std::io::Cursor;

use kgprompt_core::data::{
    kfold_split, plan_folds, read_dataset_jsonl, sample_few_shot, write_dataset_jsonl, DataError, FewShotConfig,
    Instance, Span,
};
use kgprompt_core::ClassLabel;
use proptest::prelude::*;

fn instance(i: usize, causal: bool) -> Instance {
    Instance {
        instance_id: format!("d{i:03}"),
        text: format!("GENE{i} affects DISEASE{i}."),
        span1: Span { start: 0, end: 4 + i.to_string().len() },
        span2: Span { start: 13 + i.to_string().len(), end: 20 + 2 * i.to_string().len() },
        label: if causal { ClassLabel::Causal } else { ClassLabel::NonCausal },
    }
}

fn pool(labels: &[bool]) -> Vec<Instance> {
    labels.iter().enumerate().map(|(i, &c)| instance(i, c)).collect()
}

fn balanced(n: usize) -> Vec<Instance> {
    (0..n).map(|i| instance(i, i % 2 == 0)).collect()
}

#[test]
fn fixture_instances_are_valid() {
    for i in [0, 7, 42, 123] {
        let inst = instance(i, true);
        inst.validate().unwrap();
        assert_eq!(inst.e1(), format!("GENE{i}"));
        assert_eq!(inst.e2(), format!("DISEASE{i}"));
    }
}

#[test]
fn ten_instances_five_folds() {
    let data = balanced(10);
    let plan = plan_folds(&data, 5, 203, false).unwrap();
    let folds = kfold_split(&data, &plan).unwrap();
    let mut seen = HashSet::new();
    for f in &folds {
        assert_eq!(f.test.len(), 2);
        for id in &f.test {
            assert!(seen.insert(id.clone()));
        }
    }
    assert_eq!(seen.len(), 10);
    assert_eq!(plan_folds(&data, 5, 203, false).unwrap(), plan);
}

#[test]
fn every_instance_trains_in_four_folds() {
    let data = balanced(100);
    let plan = plan_folds(&data, 5, 203, true).unwrap();
    let folds = kfold_split(&data, &plan).unwrap();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for f in &folds {
        for id in &f.train {
            *counts.entry(id).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), 100);
    assert!(counts.values().all(|&c| c == 4));
}

#[test]
fn few_shot_examples() {
    let data = balanced(100);
    let ids: Vec<String> = data.iter().map(|i| i.instance_id.clone()).collect();
    let cfg = FewShotConfig::default();
    let a = sample_few_shot(&ids, &data, &cfg).unwrap();
    assert_eq!(a, sample_few_shot(&ids, &data, &cfg).unwrap());
    let labels: HashMap<&str, ClassLabel> = data.iter().map(|i| (i.instance_id.as_str(), i.label)).collect();
    let causal = a.iter().filter(|id| labels[id.as_str()] == ClassLabel::Causal).count();
    assert_eq!((a.len(), causal), (16, 8));

    let skewed = pool(&(0..40).map(|i| i < 3).collect::<Vec<_>>());
    let ids: Vec<String> = skewed.iter().map(|i| i.instance_id.clone()).collect();
    assert!(matches!(sample_few_shot(&ids, &skewed, &cfg), Err(DataError::ClassExhausted { .. })));

    let twelve = balanced(12);
    let ids: Vec<String> = twelve.iter().map(|i| i.instance_id.clone()).collect();
    assert!(matches!(sample_few_shot(&ids, &twelve, &cfg), Err(DataError::TooFewInstances { .. })));
}

#[test]
fn loader_rejects_bad_lines() {
    let bad_span =
        r#"{"instance_id":"a","text":"abc","e1":{"start":0,"end":1},"e2":{"start":2,"end":9},"label":"causal"}"#;
    assert!(matches!(read_dataset_jsonl(Cursor::new(bad_span)), Err(DataError::Span { .. })));
    let bad_label =
        r#"{"instance_id":"a","text":"abc","e1":{"start":0,"end":1},"e2":{"start":2,"end":3},"label":"maybe"}"#;
    assert!(matches!(read_dataset_jsonl(Cursor::new(bad_label)), Err(DataError::Label { .. })));
    let fgf6 = r#"{"instance_id":"c1","text":"FGF6 contributes to the growth of prostate cancer.","e1":{"start":0,"end":4},"e2":{"start":34,"end":49},"label":"causal"}"#;
    let got = read_dataset_jsonl(Cursor::new(fgf6)).unwrap();
    assert_eq!((got[0].e1().as_str(), got[0].e2().as_str()), ("FGF6", "prostate cancer"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn folds_partition_and_samples_stay_in_train(
        labels in prop::collection::vec(any::<bool>(), 5..120),
        seed in any::<u64>(),
        stratified in any::<bool>(),
    ) {
        let data = pool(&labels);
        let plan = plan_folds(&data, 5, seed, stratified).unwrap();
        prop_assert_eq!(plan.assignments.len(), data.len());
        let folds = kfold_split(&data, &plan).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), data.len());
        for f in &folds {
            let test: HashSet<&String> = f.test.iter().collect();
            prop_assert!(f.train.iter().all(|id| !test.contains(id)));
            prop_assert_eq!(f.train.len() + f.test.len(), data.len());
            let cfg = FewShotConfig { k: 16, seed, stratified: true };
            let train_causal = f.train.iter().filter(|id| data.iter().any(|d| &d.instance_id == *id && d.label == ClassLabel::Causal)).count();
            match sample_few_shot(&f.train, &data, &cfg) {
                Ok(sample) => {
                    prop_assert_eq!(sample.len(), 16);
                    prop_assert!(sample.iter().all(|id| !test.contains(id) && f.train.contains(id)));
                    let sc = sample.iter().filter(|id| data.iter().any(|d| &d.instance_id == *id && d.label == ClassLabel::Causal)).count();
                    prop_assert_eq!(sc, 8);
                }
                Err(DataError::TooFewInstances { .. }) => prop_assert!(f.train.len() < 16),
                Err(DataError::ClassExhausted { .. }) => {
                    prop_assert!(train_causal < 8 || f.train.len() - train_causal < 8)
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }

    #[test]
    fn dataset_roundtrip(labels in prop::collection::vec(any::<bool>(), 0..30)) {
        let data = pool(&labels);
        let mut buf = Vec::new();
        write_dataset_jsonl(&data, &mut buf).unwrap();
        prop_assert_eq!(read_dataset_jsonl(Cursor::new(buf)).unwrap(), data);
    }
}
