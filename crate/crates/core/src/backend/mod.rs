//! Text-generation backends.
//!
//! Every LLM call in the pipeline goes through [`TextBackend`]. Three
//! implementations ship: [`ScriptedBackend`] replays canned responses keyed by
//! prompt fingerprint, [`HttpBackend`] talks to an OpenAI-compatible
//! chat-completions endpoint, and [`SimulatedBackend`] is a calibrated
//! stochastic stand-in for a navigation model on synthetic worlds.

mod http;
mod scripted;
mod simulated;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use scripted::{CallRecord, RecordingBackend, Script, ScriptEntry, ScriptedBackend};
pub use simulated::{classify_prompt, PromptKind, SimulatedBackend, SimulationProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.95,
            max_new_tokens: 256,
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    /// Parameters for the `index`-th sample of a batch: the seed, if any, is
    /// offset by the sample index.
    pub fn for_sample(&self, index: usize) -> Self {
        Self {
            seed: self.seed.map(|s| s.wrapping_add(index as u64)),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidParams(format!("temperature {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidParams(format!("top_p {}", self.top_p)));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidParams("max_new_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub text: String,
    pub latency: Duration,
    pub backend_id: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("endpoint returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("cannot decode response: {0}")]
    Decode(String),
    #[error("no scripted response for prompt: {normalized}")]
    UnknownPrompt { normalized: String },
    #[error("scripted responses exhausted for fingerprint {fingerprint}")]
    ScriptExhausted { fingerprint: String },
    #[error("sample {index} of batch failed: {source}")]
    BatchFailed {
        index: usize,
        #[source]
        source: Box<BackendError>,
    },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Transport failures and rate limits are retried; nothing else is.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport(_) | Self::RateLimited { .. })
    }
}

/// A text-generation backend. Implementations must accept concurrent calls.
pub trait TextBackend: Send + Sync {
    fn id(&self) -> &str;

    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<BackendResponse, BackendError>;

    /// `n` samples in decoding order. Sample `i` uses
    /// [`SamplingParams::for_sample`]`(i)`; the first failure aborts the batch.
    fn generate_n(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<BackendResponse>, BackendError> {
        if n == 0 {
            return Err(BackendError::InvalidParams("n must be at least 1".into()));
        }
        (0..n)
            .map(|i| {
                self.generate(prompt, &params.for_sample(i))
                    .map_err(|e| BackendError::BatchFailed {
                        index: i,
                        source: Box::new(e),
                    })
            })
            .collect()
    }
}

impl<T: TextBackend + ?Sized> TextBackend for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<BackendResponse, BackendError> {
        (**self).generate(prompt, params)
    }
    fn generate_n(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<BackendResponse>, BackendError> {
        (**self).generate_n(prompt, n, params)
    }
}

impl<T: TextBackend + ?Sized> TextBackend for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<BackendResponse, BackendError> {
        (**self).generate(prompt, params)
    }
    fn generate_n(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<BackendResponse>, BackendError> {
        (**self).generate_n(prompt, n, params)
    }
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_prompt(prompt: &str) -> String {
    prompt.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stable fingerprint of a prompt: hex SHA-256 prefix of its normalized form.
pub fn fingerprint(prompt: &str) -> String {
    let digest = Sha256::digest(normalize_prompt(prompt).as_bytes());
    hex::encode(&digest[..16])
}
