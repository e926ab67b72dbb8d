//! Minimal blocking JSON-over-HTTP client shared by the external reasoner
//! and the external relevance scorer.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Additional attempts after the first failure.
    #[serde(default)]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_ms: default_timeout_ms(),
            retries: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("{url}: HTTP status {status}")]
    Status { url: String, status: u16 },
    #[error("{url}: {message}")]
    Request { url: String, message: String },
    #[error("{url}: malformed response body: {message}")]
    Body { url: String, message: String },
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl JsonClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// POSTs `body` to `path`, retrying transport failures and non-2xx replies.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, TransportError> {
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let mut last = None;
        for _ in 0..=self.config.retries {
            match self.attempt(&url, body) {
                Ok(resp) => return Ok(resp),
                // A 2xx with an unusable body will not improve on retry.
                Err(e @ TransportError::Body { .. }) => return Err(e),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn attempt<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, TransportError> {
        let mut resp =
            self.agent
                .post(url)
                .send_json(body)
                .map_err(|e| TransportError::Request {
                    url: url.to_string(),
                    message: e.to_string(),
                })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status {
                url: url.to_string(),
                status,
            });
        }
        resp.body_mut()
            .read_json::<Resp>()
            .map_err(|e| TransportError::Body {
                url: url.to_string(),
                message: e.to_string(),
            })
    }
}
