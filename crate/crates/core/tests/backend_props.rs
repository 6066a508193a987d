use std::collections::BTreeMap;
use std::io::Cursor;

use kgprompt_core::backend::{
    decode_response, predict_batch, predict_mock, write_predictions_jsonl, BackendError, InferenceRequest,
    InferenceResponse, MockBackend, PredictionRecord,
};
use kgprompt_core::eval::parse_predictions;
use kgprompt_core::prompts::{Architecture, LabelMapping};
use kgprompt_core::ClassLabel;
use proptest::prelude::*;

fn request(id: &str, prompt: &str, mapping: &LabelMapping) -> InferenceRequest {
    InferenceRequest {
        prompt: prompt.into(),
        mask_token: "[MASK]".into(),
        candidates: mapping.candidates(),
        architecture: Architecture::MLM,
        request_id: id.into(),
    }
}

const SMOKING: &str = "Smoking causes cancer in adult male. It shows [MASK] relation.";

#[test]
fn mock_flips_between_frozen_seeds() {
    let m = LabelMapping::custom("true", "false").unwrap();
    let req = request("smoke-1", SMOKING, &m);
    assert_eq!(predict_mock(&req, &m, 203).unwrap().predicted, ClassLabel::Causal);
    assert_eq!(predict_mock(&req, &m, 205).unwrap().predicted, ClassLabel::NonCausal);
    assert_eq!(predict_mock(&req, &m, 203).unwrap(), predict_mock(&req, &m, 203).unwrap());
}

#[test]
fn mock_rejects_empty_candidates() {
    let m = LabelMapping::identity();
    let mut req = request("r", SMOKING, &m);
    req.candidates.clear();
    assert!(matches!(predict_mock(&req, &m, 1), Err(BackendError::InvalidRequest(_))));
}

fn scores(pairs: &[(&str, f64)]) -> InferenceResponse {
    InferenceResponse {
        request_id: "r".into(),
        scores: Some(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
        generated_text: None,
    }
}

fn text(t: &str) -> InferenceResponse {
    InferenceResponse { request_id: "r".into(), scores: None, generated_text: Some(t.into()) }
}

#[test]
fn decoding_contract() {
    let custom = LabelMapping::custom("true", "false").unwrap();
    let req = request("r", SMOKING, &custom);
    let (label, score) = decode_response(&req, &scores(&[("true", 0.9), ("false", 0.1)]), &custom).unwrap();
    assert_eq!((label, score), (ClassLabel::Causal, Some(0.9)));
    assert_eq!(decode_response(&req, &text("false."), &custom).unwrap().0, ClassLabel::NonCausal);
    assert!(matches!(decode_response(&req, &text("maybe"), &custom), Err(BackendError::UnmappableOutput(_))));
    let tie = decode_response(&req, &scores(&[("true", 0.5), ("false", 0.5)]), &custom).unwrap();
    assert_eq!(tie.0, ClassLabel::Causal);

    let identity = LabelMapping::identity();
    let req = request("r", SMOKING, &identity);
    assert_eq!(decode_response(&req, &text("It is Non-Causal."), &identity).unwrap().0, ClassLabel::NonCausal);
    assert_eq!(decode_response(&req, &text("CAUSAL"), &identity).unwrap().0, ClassLabel::Causal);
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let m = LabelMapping::custom("true", "false").unwrap();
    let req = request("r", SMOKING, &m);
    let both = InferenceResponse { generated_text: Some("true".into()), ..scores(&[("true", 1.0), ("false", 0.0)]) };
    assert!(matches!(decode_response(&req, &both, &m), Err(BackendError::Protocol(_))));
    assert!(matches!(decode_response(&req, &scores(&[("true", 1.0)]), &m), Err(BackendError::Protocol(_))));
    assert!(matches!(
        decode_response(&req, &scores(&[("true", f64::NAN), ("false", 0.0)]), &m),
        Err(BackendError::Protocol(_))
    ));
    let mut other = scores(&[("true", 1.0), ("false", 0.0)]);
    other.request_id = "x".into();
    assert!(matches!(decode_response(&req, &other, &m), Err(BackendError::Protocol(_))));
}

proptest! {
    #[test]
    fn argmax_is_scale_invariant(a in -1e6f64..1e6, b in -1e6f64..1e6, k in 1e-6f64..1e6) {
        let m = LabelMapping::custom("true", "false").unwrap();
        let req = request("r", SMOKING, &m);
        let base = decode_response(&req, &scores(&[("true", a), ("false", b)]), &m).unwrap().0;
        let scaled = decode_response(&req, &scores(&[("true", a * k), ("false", b * k)]), &m).unwrap().0;
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn batch_equals_singles(prompts in prop::collection::vec("[a-z ]{1,30}", 0..40), seed in any::<u64>(), in_flight in 1usize..8) {
        let m = LabelMapping::identity();
        let reqs: Vec<InferenceRequest> = prompts
            .iter()
            .enumerate()
            .map(|(i, p)| request(&format!("r{i}"), p, &m))
            .collect();
        let backend = MockBackend { seed };
        let batch: Vec<PredictionRecord> = predict_batch(&backend, &reqs, &m, in_flight)
            .into_iter()
            .collect::<Result<_, _>>()
            .unwrap();
        let singles: Vec<PredictionRecord> = reqs.iter().map(|r| predict_mock(r, &m, seed).unwrap()).collect();
        prop_assert_eq!(&batch, &singles);

        let mut buf = Vec::new();
        write_predictions_jsonl(&batch, &mut buf).unwrap();
        prop_assert_eq!(parse_predictions(Cursor::new(buf)).unwrap(), batch);
    }
}

#[test]
fn duplicate_request_ids_rejected() {
    let m = LabelMapping::identity();
    let reqs = vec![request("a", "x", &m), request("a", "y", &m)];
    let out = predict_batch(&MockBackend { seed: 1 }, &reqs, &m, 2);
    assert!(out.iter().all(|r| matches!(r, Err(BackendError::InvalidRequest(_)))));
}

#[test]
fn scores_map_roundtrips_as_json() {
    let resp = scores(&[("true", 0.25), ("false", 0.75)]);
    let json = serde_json::to_string(&resp).unwrap();
    let back: InferenceResponse = serde_json::from_str(&json).unwrap();
    assert_eq!(back, resp);
    let expected: BTreeMap<String, f64> = [("false".to_string(), 0.75), ("true".to_string(), 0.25)].into();
    assert_eq!(back.scores.unwrap(), expected);
}
