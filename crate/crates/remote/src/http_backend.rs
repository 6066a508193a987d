//! Client for the `/predict` JSON inference protocol.

use std::time::Duration;

use kgprompt_core::backend::{
    decode_response, Backend, BackendError, ErrorBody, InferenceRequest, InferenceResponse, PredictionRecord,
};
use kgprompt_core::prompts::LabelMapping;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::transport::{agent, exchange, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpEndpoint {
    /// Base URL; requests go to `<url>/predict`.
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Concurrent requests allowed during batch prediction.
    #[serde(default = "default_in_flight")]
    pub in_flight: usize,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_in_flight() -> usize {
    4
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        HttpEndpoint {
            url: url.into(),
            timeout: default_timeout(),
            retry: RetryPolicy::default(),
            in_flight: default_in_flight(),
        }
    }

    pub fn predict_url(&self) -> Result<String, BackendError> {
        let base =
            Url::parse(&self.url).map_err(|e| BackendError::InvalidRequest(format!("url `{}`: {e}", self.url)))?;
        if !matches!(base.scheme(), "http" | "https") {
            return Err(BackendError::InvalidRequest(format!("url `{}` must be http(s)", self.url)));
        }
        Ok(format!("{}/predict", self.url.trim_end_matches('/')))
    }
}

pub struct HttpBackend {
    endpoint: HttpEndpoint,
    predict_url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: HttpEndpoint) -> Result<Self, BackendError> {
        if !(endpoint.timeout > 0.0 && endpoint.timeout.is_finite()) {
            return Err(BackendError::InvalidRequest("timeout must be positive".into()));
        }
        let predict_url = endpoint.predict_url()?;
        let agent = agent(Duration::from_secs_f64(endpoint.timeout), concat!("kgprompt/", env!("CARGO_PKG_VERSION")));
        Ok(HttpBackend { endpoint, predict_url, agent })
    }

    pub fn endpoint(&self) -> &HttpEndpoint {
        &self.endpoint
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> String {
        format!("http:{}", self.endpoint.url)
    }

    fn predict(&self, req: &InferenceRequest, mapping: &LabelMapping) -> Result<PredictionRecord, BackendError> {
        req.validate()?;
        let body = serde_json::to_string(req).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let reply = exchange(&self.endpoint.retry, "predict", || {
            self.agent.post(&self.predict_url).header("Content-Type", "application/json").send(body.as_str())
        })
        .map_err(BackendError::Network)?;
        match reply.status {
            200..=299 => {}
            s if s == 429 || s >= 500 => {
                return Err(BackendError::Network(format!("HTTP {s} after retries")));
            }
            s => {
                let msg = match serde_json::from_str::<ErrorBody>(&reply.body) {
                    Ok(e) => format!("HTTP {s} {}: {}", e.code, e.message),
                    Err(_) => format!("HTTP {s}"),
                };
                return Err(BackendError::Protocol(msg));
            }
        }
        let resp: InferenceResponse =
            serde_json::from_str(&reply.body).map_err(|e| BackendError::Protocol(format!("response body: {e}")))?;
        let (predicted, score) = decode_response(req, &resp, mapping)?;
        Ok(PredictionRecord { instance_id: req.request_id.clone(), predicted, score, backend: self.name() })
    }
}

/// One-shot prediction against `endpoint`.
pub fn predict_http(
    endpoint: &HttpEndpoint,
    req: &InferenceRequest,
    mapping: &LabelMapping,
) -> Result<PredictionRecord, BackendError> {
    HttpBackend::new(endpoint.clone())?.predict(req, mapping)
}
