//! Precision, recall and F1 for the causal class, and their aggregation
//! over cross-validation folds.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::PredictionRecord;
use crate::task::ClassLabel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold label for instance `{0}`")]
    MissingGold(String),
    #[error("instance `{0}` predicted more than once")]
    DuplicatePrediction(String),
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("predictions file error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed JSON: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateFlag {
    NoPositivePredictions,
    NoPositiveGolds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub degenerate_flags: BTreeSet<DegenerateFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
}

impl Metrics {
    /// Zero denominators yield 0 and raise the matching flag.
    pub fn from_confusion(c: Confusion) -> Self {
        let mut flags = BTreeSet::new();
        let precision = if c.tp + c.fp == 0 {
            flags.insert(DegenerateFlag::NoPositivePredictions);
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fp) as f64
        };
        let recall = if c.tp + c.fn_ == 0 {
            flags.insert(DegenerateFlag::NoPositiveGolds);
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fn_) as f64
        };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics { precision, recall, f1, degenerate_flags: flags, confusion: Some(c) }
    }
}

/// Counts the confusion matrix with `causal` as the positive class.
pub fn confusion(preds: &[PredictionRecord], golds: &HashMap<String, ClassLabel>) -> Result<Confusion, EvalError> {
    let mut seen = HashSet::new();
    let mut c = Confusion::default();
    for p in preds {
        if !seen.insert(p.instance_id.as_str()) {
            return Err(EvalError::DuplicatePrediction(p.instance_id.clone()));
        }
        let gold = golds.get(&p.instance_id).ok_or_else(|| EvalError::MissingGold(p.instance_id.clone()))?;
        match (p.predicted, gold) {
            (ClassLabel::Causal, ClassLabel::Causal) => c.tp += 1,
            (ClassLabel::Causal, ClassLabel::NonCausal) => c.fp += 1,
            (ClassLabel::NonCausal, ClassLabel::Causal) => c.fn_ += 1,
            (ClassLabel::NonCausal, ClassLabel::NonCausal) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn compute_metrics(preds: &[PredictionRecord], golds: &HashMap<String, ClassLabel>) -> Result<Metrics, EvalError> {
    Ok(Metrics::from_confusion(confusion(preds, golds)?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub per_fold: Vec<Metrics>,
    pub mean: Metrics,
    pub f1_std: f64,
    pub std_mode: StdMode,
}

fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    xs.sum::<f64>() / n as f64
}

/// Fold means of P, R and F1 plus the spread of per-fold F1.
pub fn aggregate_folds(reports: &[Metrics], std_mode: StdMode) -> Result<FoldReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let f1s = reports.iter().map(|m| m.f1);
    let f1_mean = mean(f1s.clone());
    let n = reports.len() as f64;
    let ss: f64 = f1s.map(|f| (f - f1_mean).powi(2)).sum();
    let f1_std = match std_mode {
        StdMode::Population => (ss / n).sqrt(),
        StdMode::Sample if reports.len() > 1 => (ss / (n - 1.0)).sqrt(),
        StdMode::Sample => 0.0,
    };
    let flags = reports.iter().flat_map(|m| m.degenerate_flags.iter().copied()).collect();
    Ok(FoldReport {
        per_fold: reports.to_vec(),
        mean: Metrics {
            precision: mean(reports.iter().map(|m| m.precision)),
            recall: mean(reports.iter().map(|m| m.recall)),
            f1: f1_mean,
            degenerate_flags: flags,
            confusion: None,
        },
        f1_std,
        std_mode,
    })
}

/// Metrics from the summed confusion matrices of all folds.
pub fn pooled_metrics(reports: &[Metrics]) -> Result<Metrics, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut total = Confusion::default();
    for m in reports {
        total.add(&m.confusion.ok_or(EvalError::EmptyInput)?);
    }
    Ok(Metrics::from_confusion(total))
}

impl FoldReport {
    /// Plain-text table in percent, F1 spread in parentheses.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<6} {:>6} {:>6} {:>6}", "fold", "P", "R", "F1");
        for (i, m) in self.per_fold.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<6} {:>6.1} {:>6.1} {:>6.1}",
                i + 1,
                m.precision * 100.0,
                m.recall * 100.0,
                m.f1 * 100.0
            );
        }
        let std = format!("{:.2}", self.f1_std);
        let _ = writeln!(
            s,
            "{:<6} {:>6.1} {:>6.1} {:>6.1} ({})",
            "mean",
            self.mean.precision * 100.0,
            self.mean.recall * 100.0,
            self.mean.f1 * 100.0,
            std.trim_start_matches('0')
        );
        s
    }
}

/// Reads a predictions file; unknown labels are schema errors.
pub fn read_predictions_jsonl(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, EvalError> {
    parse_predictions(BufReader::new(File::open(path)?))
}

pub fn parse_predictions(reader: impl BufRead) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|source| EvalError::Parse { line: line_no, source })?;
        let rec: PredictionRecord =
            serde_json::from_value(value).map_err(|e| EvalError::Schema { line: line_no, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
