//! A small in-process HTTP server for tests and local dry runs. Each
//! request is answered by a user-supplied handler.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use kgprompt_core::backend::{InferenceRequest, InferenceResponse};
use tiny_http::{Header, Response, Server};
use url::form_urlencoded;

use crate::wikidata::entity_api_key;

#[derive(Debug, Clone)]
pub struct StubRequest {
    pub method: String,
    /// Path plus query string.
    pub url: String,
    pub body: String,
    /// Zero-based arrival index across the server's lifetime.
    pub seq: usize,
}

#[derive(Debug, Clone)]
pub struct StubResponse {
    pub status: u16,
    pub body: String,
    pub headers: Vec<(String, String)>,
}

impl StubResponse {
    pub fn json(status: u16, body: impl Into<String>) -> Self {
        StubResponse { status, body: body.into(), headers: vec![("Content-Type".into(), "application/json".into())] }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

pub struct StubServer {
    server: Arc<Server>,
    url: String,
    hits: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start<F>(handler: F) -> std::io::Result<Self>
    where
        F: Fn(&StubRequest) -> StubResponse + Send + 'static,
    {
        let server = Arc::new(Server::http("127.0.0.1:0").map_err(std::io::Error::other)?);
        let addr =
            server.server_addr().to_ip().ok_or_else(|| std::io::Error::other("stub server has no IP address"))?;
        let hits = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            std::thread::spawn(move || {
                for mut rq in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = rq.as_reader().read_to_string(&mut body);
                    let req = StubRequest {
                        method: rq.method().to_string(),
                        url: rq.url().to_string(),
                        body,
                        seq: hits.fetch_add(1, Ordering::SeqCst),
                    };
                    let out = handler(&req);
                    let mut resp = Response::from_string(out.body).with_status_code(out.status);
                    for (k, v) in &out.headers {
                        if let Ok(h) = Header::from_bytes(k.as_bytes(), v.as_bytes()) {
                            resp = resp.with_header(h);
                        }
                    }
                    let _ = rq.respond(resp);
                }
            })
        };
        Ok(StubServer { server, url: format!("http://{addr}"), hits, worker: Some(worker) })
    }

    /// A `/predict` server that answers every valid request via `answer`.
    pub fn predict<F>(answer: F) -> std::io::Result<Self>
    where
        F: Fn(&InferenceRequest, usize) -> StubResponse + Send + 'static,
    {
        Self::start(move |r| {
            if r.method != "POST" || r.url != "/predict" {
                return StubResponse::json(404, r#"{"code":"not_found","message":"unknown route"}"#);
            }
            match serde_json::from_str::<InferenceRequest>(&r.body) {
                Ok(req) => answer(&req, r.seq),
                Err(e) => StubResponse::json(
                    400,
                    serde_json::json!({"code": "bad_request", "message": e.to_string()}).to_string(),
                ),
            }
        })
    }

    /// A Wikibase stand-in answering SPARQL POSTs and entity API GETs from
    /// `responses`, keyed by the same canonical text the client caches under.
    /// Unknown queries get a 404.
    pub fn wikibase(responses: HashMap<String, String>) -> std::io::Result<Self> {
        Self::start(move |r| {
            let key = if r.method == "POST" {
                form_urlencoded::parse(r.body.as_bytes()).find(|(k, _)| k == "query").map(|(_, v)| v.into_owned())
            } else {
                r.url.split_once('?').map(|(_, q)| {
                    let pairs: Vec<(String, String)> = form_urlencoded::parse(q.as_bytes()).into_owned().collect();
                    let refs: Vec<(&str, &str)> = pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
                    entity_api_key(&refs)
                })
            };
            match key.and_then(|k| responses.get(&k)) {
                Some(body) => StubResponse::json(200, body.clone()),
                None => StubResponse::json(404, r#"{"code":"not_found","message":"no canned response"}"#),
            }
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Serializes a scores-mode response.
pub fn scores_body(request_id: &str, scores: &[(&str, f64)]) -> String {
    let resp = InferenceResponse {
        request_id: request_id.into(),
        scores: Some(scores.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
        generated_text: None,
    };
    serde_json::to_string(&resp).expect("response serializes")
}

/// Serializes a generated-text response.
pub fn text_body(request_id: &str, text: &str) -> String {
    let resp = InferenceResponse { request_id: request_id.into(), scores: None, generated_text: Some(text.into()) };
    serde_json::to_string(&resp).expect("response serializes")
}
