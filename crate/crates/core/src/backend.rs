//! Inference backends: anything that turns a prompt into a predicted class.
//!
//! The wire types here are the JSON bodies of `POST /predict`. The HTTP
//! client lives in the remote crate; this module owns response decoding,
//! the deterministic mock and batch fan-out.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompts::{Architecture, LabelMapping, PromptRecord};
use crate::task::ClassLabel;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("output `{0}` contains none of the candidate label words")]
    UnmappableOutput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub prompt: String,
    pub mask_token: String,
    pub candidates: Vec<String>,
    pub architecture: Architecture,
    pub request_id: String,
}

impl InferenceRequest {
    pub fn from_record(record: &PromptRecord, mapping: &LabelMapping) -> Self {
        InferenceRequest {
            prompt: record.prompt.clone(),
            mask_token: record.mask_token.clone(),
            candidates: mapping.candidates(),
            architecture: record.architecture,
            request_id: record.instance_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.candidates.is_empty() {
            return Err(BackendError::InvalidRequest("candidate list is empty".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.candidates.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(BackendError::InvalidRequest(format!("duplicate candidate `{dup}`")));
        }
        if self.request_id.is_empty() {
            return Err(BackendError::InvalidRequest("request_id is empty".into()));
        }
        Ok(())
    }
}

/// Response body. Exactly one of `scores` and `generated_text` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_text: Option<String>,
}

/// Error body returned with non-2xx statuses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub predicted: ClassLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub backend: String,
}

/// Decodes a response into a class and optional score.
///
/// Scores: the highest-scoring candidate wins, ties going to the earlier
/// candidate. Generated text: the first candidate (in candidate order) that
/// occurs case-insensitively in the text wins; occurrences that sit inside
/// a longer candidate's occurrence do not count, so `non-causal` never also
/// reads as `causal`.
pub fn decode_response(
    req: &InferenceRequest,
    resp: &InferenceResponse,
    mapping: &LabelMapping,
) -> Result<(ClassLabel, Option<f64>), BackendError> {
    if resp.request_id != req.request_id {
        return Err(BackendError::Protocol(format!(
            "response for `{}` answers request `{}`",
            resp.request_id, req.request_id
        )));
    }
    match (&resp.scores, &resp.generated_text) {
        (Some(scores), None) => {
            let mut best: Option<(&str, f64)> = None;
            for c in &req.candidates {
                let s =
                    *scores.get(c).ok_or_else(|| BackendError::Protocol(format!("no score for candidate `{c}`")))?;
                if !s.is_finite() {
                    return Err(BackendError::Protocol(format!("score for `{c}` is not finite")));
                }
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
            }
            let (word, score) = best.ok_or_else(|| BackendError::InvalidRequest("no candidates".into()))?;
            let label = mapping.unmap_label(word).map_err(|e| BackendError::Protocol(e.to_string()))?;
            Ok((label, Some(score)))
        }
        (None, Some(text)) => {
            let word =
                match_generated(text, &req.candidates).ok_or_else(|| BackendError::UnmappableOutput(text.clone()))?;
            let label = mapping.unmap_label(word).map_err(|e| BackendError::Protocol(e.to_string()))?;
            Ok((label, None))
        }
        _ => Err(BackendError::Protocol("response must carry exactly one of `scores` and `generated_text`".into())),
    }
}

fn match_generated<'c>(text: &str, candidates: &'c [String]) -> Option<&'c str> {
    let hay = text.to_lowercase();
    let lowered: Vec<String> = candidates.iter().map(|c| c.to_lowercase()).collect();
    let occurrences =
        |needle: &str| -> Vec<(usize, usize)> { hay.match_indices(needle).map(|(i, m)| (i, i + m.len())).collect() };
    for (c, needle) in candidates.iter().zip(&lowered) {
        if needle.is_empty() {
            continue;
        }
        let covering: Vec<(usize, usize)> = lowered
            .iter()
            .filter(|other| other.len() > needle.len() && other.contains(needle.as_str()))
            .flat_map(|other| occurrences(other))
            .collect();
        let free = occurrences(needle).into_iter().any(|(s, e)| !covering.iter().any(|&(cs, ce)| cs <= s && e <= ce));
        if free {
            return Some(c);
        }
    }
    None
}

/// A prompt-consuming model endpoint.
pub trait Backend: Sync {
    /// Short name recorded in every prediction.
    fn name(&self) -> String;

    fn predict(&self, req: &InferenceRequest, mapping: &LabelMapping) -> Result<PredictionRecord, BackendError>;
}

/// Deterministic offline backend: the prediction is a hash of `(seed, prompt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockBackend {
    pub seed: u64,
}

impl Backend for MockBackend {
    fn name(&self) -> String {
        format!("mock:{}", self.seed)
    }

    fn predict(&self, req: &InferenceRequest, mapping: &LabelMapping) -> Result<PredictionRecord, BackendError> {
        predict_mock(req, mapping, self.seed)
    }
}

pub fn predict_mock(
    req: &InferenceRequest,
    mapping: &LabelMapping,
    seed: u64,
) -> Result<PredictionRecord, BackendError> {
    req.validate()?;
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(req.prompt.as_bytes());
    let d = h.finalize();
    let pick = u64::from_le_bytes(d[..8].try_into().expect("digest length")) % req.candidates.len() as u64;
    let score = (u64::from_le_bytes(d[8..16].try_into().expect("digest length")) >> 11) as f64 / (1u64 << 53) as f64;
    let word = &req.candidates[pick as usize];
    let predicted = mapping.unmap_label(word).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    Ok(PredictionRecord {
        instance_id: req.request_id.clone(),
        predicted,
        score: Some(score),
        backend: format!("mock:{seed}"),
    })
}

/// Runs `requests` through `backend` with at most `in_flight` concurrent
/// calls. Results are in request order regardless of completion order.
pub fn predict_batch(
    backend: &dyn Backend,
    requests: &[InferenceRequest],
    mapping: &LabelMapping,
    in_flight: usize,
) -> Vec<Result<PredictionRecord, BackendError>> {
    let mut ids = HashSet::new();
    if let Some(dup) = requests.iter().find(|r| !ids.insert(r.request_id.as_str())) {
        let msg = format!("request_id `{}` repeated in batch", dup.request_id);
        return requests.iter().map(|_| Err(BackendError::InvalidRequest(msg.clone()))).collect();
    }
    let workers = in_flight.clamp(1, requests.len().max(1));
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<Result<PredictionRecord, BackendError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("queue lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= requests.len() {
                    break;
                }
                let r = backend.predict(&requests[i], mapping);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every slot filled")).collect()
}

pub fn write_predictions_jsonl(records: &[PredictionRecord], writer: impl Write) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn export_predictions_jsonl(records: &[PredictionRecord], path: impl AsRef<Path>) -> io::Result<()> {
    write_predictions_jsonl(records, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(candidates: &[&str]) -> InferenceRequest {
        InferenceRequest {
            prompt: "p".into(),
            mask_token: "[MASK]".into(),
            candidates: candidates.iter().map(|s| s.to_string()).collect(),
            architecture: Architecture::MLM,
            request_id: "r1".into(),
        }
    }

    fn scores(pairs: &[(&str, f64)]) -> InferenceResponse {
        InferenceResponse {
            request_id: "r1".into(),
            scores: Some(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
            generated_text: None,
        }
    }

    fn text(t: &str) -> InferenceResponse {
        InferenceResponse { request_id: "r1".into(), scores: None, generated_text: Some(t.into()) }
    }

    #[test]
    fn argmax_with_custom_mapping() {
        let m = LabelMapping::custom("true", "false").unwrap();
        let (l, s) = decode_response(&req(&["true", "false"]), &scores(&[("true", 0.9), ("false", 0.1)]), &m).unwrap();
        assert_eq!(l, ClassLabel::Causal);
        assert_eq!(s, Some(0.9));
    }

    #[test]
    fn ties_go_to_first_candidate() {
        let m = LabelMapping::custom("true", "false").unwrap();
        let (l, _) = decode_response(&req(&["true", "false"]), &scores(&[("true", 0.5), ("false", 0.5)]), &m).unwrap();
        assert_eq!(l, ClassLabel::Causal);
        let (l, _) = decode_response(&req(&["false", "true"]), &scores(&[("true", 0.5), ("false", 0.5)]), &m).unwrap();
        assert_eq!(l, ClassLabel::NonCausal);
    }

    #[test]
    fn generated_text_substring_rule() {
        let m = LabelMapping::custom("true", "false").unwrap();
        let r = req(&["true", "false"]);
        assert_eq!(decode_response(&r, &text("false."), &m).unwrap().0, ClassLabel::NonCausal);
        assert_eq!(decode_response(&r, &text("It is TRUE"), &m).unwrap().0, ClassLabel::Causal);
        assert!(matches!(decode_response(&r, &text("maybe"), &m), Err(BackendError::UnmappableOutput(_))));
    }

    #[test]
    fn identity_words_do_not_shadow() {
        let m = LabelMapping::identity();
        let r = req(&["causal", "non-causal"]);
        assert_eq!(decode_response(&r, &text("Non-causal."), &m).unwrap().0, ClassLabel::NonCausal);
        assert_eq!(decode_response(&r, &text("causal"), &m).unwrap().0, ClassLabel::Causal);
        assert_eq!(decode_response(&r, &text("non-causal, no wait, causal"), &m).unwrap().0, ClassLabel::Causal);
    }

    #[test]
    fn protocol_violations() {
        let m = LabelMapping::custom("true", "false").unwrap();
        let r = req(&["true", "false"]);
        assert!(matches!(decode_response(&r, &scores(&[("true", 0.9)]), &m), Err(BackendError::Protocol(_))));
        assert!(matches!(
            decode_response(&r, &scores(&[("true", f64::NAN), ("false", 0.1)]), &m),
            Err(BackendError::Protocol(_))
        ));
        let both =
            InferenceResponse { generated_text: Some("true".into()), ..scores(&[("true", 1.0), ("false", 0.0)]) };
        assert!(matches!(decode_response(&r, &both, &m), Err(BackendError::Protocol(_))));
        let mut other = text("true");
        other.request_id = "r2".into();
        assert!(matches!(decode_response(&r, &other, &m), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn mock_is_deterministic_and_validates() {
        let m = LabelMapping::identity();
        let r = req(&["causal", "non-causal"]);
        assert_eq!(predict_mock(&r, &m, 1).unwrap(), predict_mock(&r, &m, 1).unwrap());
        assert!(matches!(predict_mock(&req(&[]), &m, 1), Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn batch_rejects_repeated_ids() {
        let m = LabelMapping::identity();
        let r = req(&["causal", "non-causal"]);
        let out = predict_batch(&MockBackend { seed: 1 }, &[r.clone(), r], &m, 2);
        assert!(out.iter().all(|r| r.is_err()));
    }
}
