//! Blocking HTTP exchange with retry and exponential backoff.

use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use ureq::http::Response;
use ureq::Body;

/// Largest response body accepted, in bytes.
const BODY_LIMIT: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub max_retries: u32,
    /// Base delay in seconds; attempt `i` waits `backoff * 2^i`.
    pub backoff: f64,
    /// Upper bound on any single wait, including a server's Retry-After.
    pub max_wait: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, backoff: 1.0, max_wait: 60.0 }
    }
}

impl RetryPolicy {
    fn wait(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let exp = self.backoff * 2f64.powi(attempt as i32);
        let hint = retry_after.map_or(0.0, |d| d.as_secs_f64());
        Duration::from_secs_f64(exp.max(hint).min(self.max_wait).max(0.0))
    }
}

/// A response that arrived, whatever its status.
#[derive(Debug, Clone)]
pub(crate) struct Reply {
    pub status: u16,
    pub retry_after: Option<Duration>,
    pub body: String,
}

fn transient_status(status: u16) -> bool {
    status == 429 || status >= 500
}

fn read_reply(mut resp: Response<Body>) -> Result<Reply, ureq::Error> {
    let status = resp.status().as_u16();
    let retry_after = resp
        .headers()
        .get("retry-after")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_secs);
    let body = resp.body_mut().with_config().limit(BODY_LIMIT).read_to_string()?;
    Ok(Reply { status, retry_after, body })
}

/// Sends until a non-transient reply arrives or retries run out. Transport
/// errors, 429 and 5xx are transient. Returns the last reply, or the last
/// transport error as text.
pub(crate) fn exchange(
    policy: &RetryPolicy,
    what: &str,
    send: impl Fn() -> Result<Response<Body>, ureq::Error>,
) -> Result<Reply, String> {
    let mut attempt = 0;
    loop {
        let outcome = send().and_then(read_reply);
        let last = attempt >= policy.max_retries;
        match outcome {
            Ok(reply) if !transient_status(reply.status) || last => return Ok(reply),
            Ok(reply) => {
                let wait = policy.wait(attempt, reply.retry_after);
                warn!("{what}: HTTP {}, retrying in {:.1}s", reply.status, wait.as_secs_f64());
                std::thread::sleep(wait);
            }
            Err(e) if last => return Err(e.to_string()),
            Err(e) => {
                let wait = policy.wait(attempt, None);
                warn!("{what}: {e}, retrying in {:.1}s", wait.as_secs_f64());
                std::thread::sleep(wait);
            }
        }
        attempt += 1;
        debug!("{what}: attempt {}", attempt + 1);
    }
}

pub(crate) fn agent(timeout: Duration, user_agent: &str) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .user_agent(user_agent)
        .build()
        .into()
}
