//! Pair-classification datasets, cross-validation folds and few-shot samples.
//!
//! Dataset files are JSONL with one instance per line:
//! `{"instance_id", "text", "e1": {"start", "end"}, "e2": {"start", "end"}, "label"}`.
//! Span offsets count Unicode scalar values and are end-exclusive.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::{derive_seed, rng, DEFAULT_SEED};
use crate::task::ClassLabel;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset file error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Span { line: usize, message: String },
    #[error("line {line}: label `{value}` is neither `causal` nor `non-causal`")]
    Label { line: usize, value: String },
    #[error("instance id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("unknown instance id `{0}`")]
    UnknownInstance(String),
    #[error("need at least {needed} instances, have {available}")]
    TooFewInstances { needed: usize, available: usize },
    #[error("need {needed} `{class}` instances for the sample, have {available}")]
    ClassExhausted { class: ClassLabel, needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fold plan does not cover instance `{0}`")]
    PlanMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub text: String,
    #[serde(rename = "e1")]
    pub span1: Span,
    #[serde(rename = "e2")]
    pub span2: Span,
    pub label: ClassLabel,
}

impl Instance {
    fn slice(&self, span: Span) -> String {
        self.text.chars().skip(span.start).take(span.end - span.start).collect()
    }

    pub fn e1(&self) -> String {
        self.slice(self.span1)
    }

    pub fn e2(&self) -> String {
        self.slice(self.span2)
    }

    /// Checks span bounds, emptiness and overlap.
    pub fn validate(&self) -> Result<(), String> {
        let len = self.text.chars().count();
        for (name, span) in [("e1", self.span1), ("e2", self.span2)] {
            if span.end > len {
                return Err(format!("{name} span end {} exceeds text length {len}", span.end));
            }
            if span.start >= span.end {
                return Err(format!("{name} span [{}, {}) is empty", span.start, span.end));
            }
            if self.slice(span).trim().is_empty() {
                return Err(format!("{name} span covers only whitespace"));
            }
        }
        if self.span1.overlaps(&self.span2) {
            return Err("e1 and e2 spans overlap".into());
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawInstance {
    instance_id: String,
    text: String,
    e1: Span,
    e2: Span,
    label: String,
}

/// Loads and validates a dataset, keeping file order. Blank lines are skipped.
pub fn load_dataset_jsonl(path: impl AsRef<Path>) -> Result<Vec<Instance>, DataError> {
    read_dataset_jsonl(BufReader::new(File::open(path)?))
}

pub fn read_dataset_jsonl(reader: impl BufRead) -> Result<Vec<Instance>, DataError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawInstance =
            serde_json::from_str(&line).map_err(|source| DataError::Parse { line: line_no, source })?;
        let label = raw.label.parse().map_err(|_| DataError::Label { line: line_no, value: raw.label.clone() })?;
        let inst = Instance { instance_id: raw.instance_id, text: raw.text, span1: raw.e1, span2: raw.e2, label };
        inst.validate().map_err(|message| DataError::Span { line: line_no, message })?;
        if !ids.insert(inst.instance_id.clone()) {
            return Err(DataError::DuplicateId(inst.instance_id));
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn write_dataset_jsonl(instances: &[Instance], writer: impl Write) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FewShotConfig {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig { k: 16, seed: DEFAULT_SEED, stratified: true }
    }
}

/// Assignment of every instance to one of `n_folds` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub n_folds: usize,
    #[serde(default)]
    pub stratified: bool,
    pub assignments: IndexMap<String, usize>,
}

/// Seeded shuffle, then round-robin assignment. In stratified mode each class
/// is shuffled separately and the round-robin runs over causal then
/// non-causal instances, so fold sizes still differ by at most one.
pub fn plan_folds(instances: &[Instance], n_folds: usize, seed: u64, stratified: bool) -> Result<FoldPlan, DataError> {
    if n_folds < 2 {
        return Err(DataError::Config("n_folds must be at least 2".into()));
    }
    if instances.len() < n_folds {
        return Err(DataError::TooFewInstances { needed: n_folds, available: instances.len() });
    }
    let mut gen = rng(derive_seed(seed, &["folds"]));
    let order: Vec<&str> = if stratified {
        let mut all = Vec::with_capacity(instances.len());
        for class in ClassLabel::ALL {
            let mut ids: Vec<&str> =
                instances.iter().filter(|i| i.label == class).map(|i| i.instance_id.as_str()).collect();
            ids.shuffle(&mut gen);
            all.extend(ids);
        }
        all
    } else {
        let mut ids: Vec<&str> = instances.iter().map(|i| i.instance_id.as_str()).collect();
        ids.shuffle(&mut gen);
        ids
    };
    let by_position: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (*id, i % n_folds)).collect();
    let assignments = instances.iter().map(|i| (i.instance_id.clone(), by_position[i.instance_id.as_str()])).collect();
    Ok(FoldPlan { seed, n_folds, stratified, assignments })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Train/test id lists per fold, each in dataset order.
pub fn kfold_split(instances: &[Instance], plan: &FoldPlan) -> Result<Vec<Fold>, DataError> {
    if instances.len() < plan.n_folds {
        return Err(DataError::TooFewInstances { needed: plan.n_folds, available: instances.len() });
    }
    let mut folds: Vec<Fold> =
        (0..plan.n_folds).map(|index| Fold { index, train: Vec::new(), test: Vec::new() }).collect();
    for inst in instances {
        let f = *plan
            .assignments
            .get(&inst.instance_id)
            .filter(|f| **f < plan.n_folds)
            .ok_or_else(|| DataError::PlanMismatch(inst.instance_id.clone()))?;
        for fold in folds.iter_mut() {
            if fold.index == f {
                fold.test.push(inst.instance_id.clone());
            } else {
                fold.train.push(inst.instance_id.clone());
            }
        }
    }
    Ok(folds)
}

fn pick(ids: &[&str], m: usize, seed: u64) -> Vec<String> {
    let mut chosen = index::sample(&mut rng(seed), ids.len(), m).into_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| ids[i].to_string()).collect()
}

/// Draws the k-shot training sample from `train`. Stratified mode takes
/// ⌈k/2⌉ causal and ⌊k/2⌋ non-causal instances. The result keeps `train` order.
pub fn sample_few_shot(
    train: &[String],
    instances: &[Instance],
    cfg: &FewShotConfig,
) -> Result<Vec<String>, DataError> {
    let labels: HashMap<&str, ClassLabel> = instances.iter().map(|i| (i.instance_id.as_str(), i.label)).collect();
    for id in train {
        if !labels.contains_key(id.as_str()) {
            return Err(DataError::UnknownInstance(id.clone()));
        }
    }
    if train.len() < cfg.k {
        return Err(DataError::TooFewInstances { needed: cfg.k, available: train.len() });
    }
    let chosen: HashSet<String> = if cfg.stratified {
        if cfg.k < 2 {
            return Err(DataError::Config("stratified sampling needs k >= 2".into()));
        }
        let mut chosen = HashSet::new();
        for (class, needed) in [(ClassLabel::Causal, cfg.k.div_ceil(2)), (ClassLabel::NonCausal, cfg.k / 2)] {
            let pool: Vec<&str> = train.iter().map(String::as_str).filter(|id| labels[id] == class).collect();
            if pool.len() < needed {
                return Err(DataError::ClassExhausted { class, needed, available: pool.len() });
            }
            chosen.extend(pick(&pool, needed, derive_seed(cfg.seed, &["few-shot", class.as_str()])));
        }
        chosen
    } else {
        let pool: Vec<&str> = train.iter().map(String::as_str).collect();
        pick(&pool, cfg.k, derive_seed(cfg.seed, &["few-shot"])).into_iter().collect()
    };
    Ok(train.iter().filter(|id| chosen.contains(*id)).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn line(id: &str, text: &str, e1: (usize, usize), e2: (usize, usize), label: &str) -> String {
        format!(
            r#"{{"instance_id":"{id}","text":"{text}","e1":{{"start":{},"end":{}}},"e2":{{"start":{},"end":{}}},"label":"{label}"}}"#,
            e1.0, e1.1, e2.0, e2.1
        )
    }

    fn load(s: &str) -> Result<Vec<Instance>, DataError> {
        read_dataset_jsonl(Cursor::new(s.as_bytes()))
    }

    #[test]
    fn loads_the_fgf6_example() {
        let text = "FGF6 contributes to the growth of prostate cancer.";
        let v = load(&line("c1", text, (0, 4), (34, 49), "causal")).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].e1(), "FGF6");
        assert_eq!(v[0].e2(), "prostate cancer");
        assert_eq!(v[0].label, ClassLabel::Causal);
    }

    #[test]
    fn span_and_label_errors() {
        assert!(matches!(load(&line("a", "short", (0, 2), (3, 9), "causal")), Err(DataError::Span { line: 1, .. })));
        assert!(matches!(load(&line("a", "short text", (0, 5), (3, 9), "causal")), Err(DataError::Span { .. })));
        assert!(matches!(load(&line("a", "short text", (0, 5), (6, 10), "maybe")), Err(DataError::Label { .. })));
        let dup = format!(
            "{}\n{}",
            line("a", "ab cd", (0, 2), (3, 5), "causal"),
            line("a", "ab cd", (0, 2), (3, 5), "causal")
        );
        assert!(matches!(load(&dup), Err(DataError::DuplicateId(_))));
    }

    #[test]
    fn spans_count_characters() {
        let v = load(&line("u", "café causes naïveté", (0, 4), (12, 19), "causal")).unwrap();
        assert_eq!(v[0].e1(), "café");
        assert_eq!(v[0].e2(), "naïveté");
    }

    fn pool(n_causal: usize, n_non: usize) -> Vec<Instance> {
        (0..n_causal + n_non)
            .map(|i| Instance {
                instance_id: format!("i{i:03}"),
                text: "a b".into(),
                span1: Span { start: 0, end: 1 },
                span2: Span { start: 2, end: 3 },
                label: if i < n_causal { ClassLabel::Causal } else { ClassLabel::NonCausal },
            })
            .collect()
    }

    #[test]
    fn ten_instances_five_folds() {
        let data = pool(5, 5);
        let plan = plan_folds(&data, 5, 203, false).unwrap();
        let folds = kfold_split(&data, &plan).unwrap();
        let mut all: Vec<String> = Vec::new();
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.train.len(), 8);
            all.extend(f.test.iter().cloned());
        }
        all.sort();
        let mut ids: Vec<String> = data.iter().map(|i| i.instance_id.clone()).collect();
        ids.sort();
        assert_eq!(all, ids);
        assert_eq!(plan, plan_folds(&data, 5, 203, false).unwrap());
    }

    #[test]
    fn too_few_for_folds() {
        assert!(matches!(plan_folds(&pool(2, 2), 5, 1, false), Err(DataError::TooFewInstances { .. })));
    }

    #[test]
    fn stratified_sample_is_balanced() {
        let data = pool(50, 50);
        let train: Vec<String> = data.iter().map(|i| i.instance_id.clone()).collect();
        let s = sample_few_shot(&train, &data, &FewShotConfig::default()).unwrap();
        assert_eq!(s.len(), 16);
        let causal = s.iter().filter(|id| id.as_str() < "i050").count();
        assert_eq!(causal, 8);
        assert_eq!(s, sample_few_shot(&train, &data, &FewShotConfig::default()).unwrap());
    }

    #[test]
    fn odd_k_favours_causal() {
        let data = pool(10, 10);
        let train: Vec<String> = data.iter().map(|i| i.instance_id.clone()).collect();
        let cfg = FewShotConfig { k: 5, ..Default::default() };
        let s = sample_few_shot(&train, &data, &cfg).unwrap();
        assert_eq!(s.iter().filter(|id| id.as_str() < "i010").count(), 3);
    }

    #[test]
    fn exhausted_class() {
        let data = pool(3, 30);
        let train: Vec<String> = data.iter().map(|i| i.instance_id.clone()).collect();
        let err = sample_few_shot(&train, &data, &FewShotConfig::default()).unwrap_err();
        assert!(matches!(err, DataError::ClassExhausted { class: ClassLabel::Causal, needed: 8, available: 3 }));
        let unstratified = FewShotConfig { stratified: false, ..Default::default() };
        assert_eq!(sample_few_shot(&train, &data, &unstratified).unwrap().len(), 16);
    }

    #[test]
    fn small_train_pool() {
        let data = pool(6, 6);
        let train: Vec<String> = data.iter().map(|i| i.instance_id.clone()).collect();
        assert!(matches!(
            sample_few_shot(&train, &data, &FewShotConfig::default()),
            Err(DataError::TooFewInstances { needed: 16, available: 12 })
        ));
    }
}
