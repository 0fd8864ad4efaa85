//! Uniform access to text-generation and embedding backends.
//!
//! A [`Gateway`] owns a generation backend, an optional embedding backend, a
//! retry policy and a [`CallLedger`]. Every logical `generate`/`embed` call is
//! counted once in the ledger regardless of how many transport attempts it
//! took; calls that still fail after the retry budget are additionally counted
//! as failures.

mod embed;
mod http;
mod ledger;
mod scripted;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::types::DecodingParams;

pub use embed::{cosine_distance, cosine_similarity, MockEmbedder};
pub use http::{HttpBackend, HttpConfig, HttpEmbedder};
pub use ledger::{CallLedger, LedgerSnapshot};
pub use scripted::{MatcherKind, ScriptError, ScriptRule, ScriptedBackend};

/// Which half of an experiment a call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Validation,
}

impl Phase {
    fn index(self) -> usize {
        match self {
            Phase::Training => 0,
            Phase::Validation => 1,
        }
    }
}

/// Role of a generation call; selects the ledger bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallTag {
    ReasonCall,
    AnswerCall,
    SummarizerReason,
    SummarizerAnswer,
    ApCall,
    DirectCall,
}

impl CallTag {
    pub const COUNT: usize = 6;
    pub const ALL: [CallTag; CallTag::COUNT] = [
        CallTag::ReasonCall,
        CallTag::AnswerCall,
        CallTag::SummarizerReason,
        CallTag::SummarizerAnswer,
        CallTag::ApCall,
        CallTag::DirectCall,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CallTag::ReasonCall => "reason_call",
            CallTag::AnswerCall => "answer_call",
            CallTag::SummarizerReason => "summarizer_reason",
            CallTag::SummarizerAnswer => "summarizer_answer",
            CallTag::ApCall => "ap_call",
            CallTag::DirectCall => "direct_call",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub params: DecodingParams,
    pub tag: CallTag,
    pub phase: Phase,
    /// Index of the issuing agent, if any. Scripted backends may key on it.
    pub agent_index: Option<usize>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, params: DecodingParams, tag: CallTag, phase: Phase) -> Self {
        Self {
            prompt: prompt.into(),
            params,
            tag,
            phase,
            agent_index: None,
        }
    }

    pub fn for_agent(mut self, agent_index: usize) -> Self {
        self.agent_index = Some(agent_index);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {payload}")]
    Malformed { payload: String },
    #[error(transparent)]
    Script(#[from] ScriptError),
}

impl BackendError {
    /// Transport failures, rate limiting and server errors are worth retrying.
    pub fn is_retriable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Malformed { .. } | BackendError::Script(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("text to embed must not be empty")]
    EmptyText,
    #[error("no embedding backend configured")]
    NoEmbedder,
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: BackendError },
    #[error(transparent)]
    Backend(BackendError),
}

/// A text-generation backend. Must be deterministic for identical prompts at temperature 0.
pub trait TextBackend: Send + Sync {
    fn complete(&self, req: &GenerationRequest) -> Result<String, BackendError>;

    /// Human-readable model identifier, reported in result tables.
    fn model_name(&self) -> String;
}

/// An embedding backend with a fixed output dimension.
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

/// Bounded retries with exponential backoff: delay `base * 2^(attempt-1)` between attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
        }
    }

    fn run<T>(&self, mut op: impl FnMut() -> Result<T, BackendError>) -> Result<T, GatewayError> {
        let attempts = self.attempts.max(1);
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retriable() => return Err(GatewayError::Backend(e)),
                Err(e) if attempt >= attempts => {
                    return Err(GatewayError::RetriesExhausted { attempts, last: e })
                }
                Err(e) => {
                    log::debug!("attempt {attempt}/{attempts} failed: {e}");
                    let delay = self.base_delay.saturating_mul(1 << (attempt - 1).min(16));
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    attempt += 1;
                }
            }
        }
    }
}

/// Backends plus the ledger that accounts for every call made through them.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn TextBackend>,
    embedder: Option<Arc<dyn EmbeddingBackend>>,
    ledger: Arc<CallLedger>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(backend: Arc<dyn TextBackend>) -> Self {
        Self {
            backend,
            embedder: None,
            ledger: Arc::new(CallLedger::new()),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn EmbeddingBackend>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Same backends, new empty ledger.
    pub fn with_fresh_ledger(&self) -> Self {
        Self {
            ledger: Arc::new(CallLedger::new()),
            ..self.clone()
        }
    }

    pub fn ledger(&self) -> &CallLedger {
        &self.ledger
    }

    pub fn model_name(&self) -> String {
        self.backend.model_name()
    }

    pub fn has_embedder(&self) -> bool {
        self.embedder.is_some()
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        if req.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        self.ledger.record(req.phase, req.tag);
        let result = self.retry.run(|| self.backend.complete(req));
        if result.is_err() {
            self.ledger.record_failure();
        }
        result
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let embedder = self.embedder.as_ref().ok_or(GatewayError::NoEmbedder)?;
        self.ledger.record_embedding();
        let result = self.retry.run(|| embedder.embed(text));
        if result.is_err() {
            self.ledger.record_failure();
        }
        result
    }
}
