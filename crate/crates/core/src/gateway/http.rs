//! Blocking HTTP clients for chat-completions and embeddings style endpoints.
//!
//! Generation sends a single user message and reads back
//! `choices[0].message.content`; embedding sends `{"model", "input"}` and reads
//! `data[0].embedding`.

use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, EmbeddingBackend, GenerationRequest, TextBackend};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    /// Full endpoint URL, e.g. `http://localhost:8080/v1/chat/completions`.
    pub url: String,
    pub model: String,
    /// Header carrying the credential, e.g. `Authorization`.
    pub auth_header: String,
    /// Complete header value, e.g. `Bearer sk-...`; no header is sent when `None`.
    pub auth_value: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            auth_header: "Authorization".into(),
            auth_value: None,
            timeout: Duration::from_secs(120),
        }
    }

    /// Read model name and credential from the environment.
    ///
    /// `MAMR_MODEL` (default `default`), `MAMR_AUTH_HEADER` (default
    /// `Authorization`) and `MAMR_API_KEY`, which is sent as `Bearer <key>`
    /// when the header is `Authorization` and verbatim otherwise.
    pub fn from_env(url: impl Into<String>) -> Self {
        let mut cfg = Self::new(url, std::env::var("MAMR_MODEL").unwrap_or_else(|_| "default".into()));
        if let Ok(h) = std::env::var("MAMR_AUTH_HEADER") {
            cfg.auth_header = h;
        }
        if let Ok(key) = std::env::var("MAMR_API_KEY") {
            cfg.auth_value = Some(if cfg.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key
            });
        }
        cfg
    }
}

fn client(timeout: Duration) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .expect("http client construction")
}

fn post_json(
    client: &reqwest::blocking::Client,
    cfg: &HttpConfig,
    body: &Value,
) -> Result<Value, BackendError> {
    let mut req = client.post(&cfg.url).json(body);
    if let Some(v) = &cfg.auth_value {
        req = req.header(cfg.auth_header.as_str(), v.as_str());
    }
    let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(BackendError::Status {
            status: status.as_u16(),
            body: text,
        });
    }
    serde_json::from_str(&text).map_err(|_| BackendError::Malformed { payload: text })
}

pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let client = client(cfg.timeout);
        Self { cfg, client }
    }

    fn request_body(&self, req: &GenerationRequest) -> Value {
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [{ "role": "user", "content": req.prompt }],
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
        });
        if let Some(seed) = req.params.seed {
            // Many servers reject seeds above i64::MAX.
            body["seed"] = json!(seed >> 1);
        }
        body
    }
}

impl TextBackend for HttpBackend {
    fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let value = post_json(&self.client, &self.cfg, &self.request_body(req))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed {
                payload: value.to_string(),
            })
    }

    fn model_name(&self) -> String {
        self.cfg.model.clone()
    }
}

pub struct HttpEmbedder {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(cfg: HttpConfig) -> Self {
        let client = client(cfg.timeout);
        Self { cfg, client }
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let body = json!({ "model": self.cfg.model, "input": text });
        let value = post_json(&self.client, &self.cfg, &body)?;
        value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| BackendError::Malformed {
                payload: value.to_string(),
            })
    }
}
