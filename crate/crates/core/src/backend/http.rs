//! Blocking client for OpenAI-compatible `chat/completions` endpoints.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, BackendResponse, SamplingParams, TextBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Either the API root (`.../v1`) or the full `chat/completions` URL.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no auth header.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "navigator".into(),
            api_key_env: "NAVVERIFY_API_KEY".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl HttpConfig {
    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    fn backoff(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let cap = Duration::from_millis(self.max_backoff_ms);
        let exp = Duration::from_millis(self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(20)));
        retry_after.unwrap_or(exp).min(cap)
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    id: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.base_url.trim().is_empty() {
            return Err(BackendError::Config("base_url is empty".into()));
        }
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let id = format!("http:{}", config.model);
        Ok(Self {
            config,
            agent,
            api_key,
            id,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn request(&self, prompt: &str, n: usize, params: &SamplingParams) -> Result<Vec<String>, BackendError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_new_tokens,
            "n": n,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        let mut req = self
            .agent
            .post(&self.config.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(map_transport)?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|s| s.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.body_mut().read_to_string().map_err(map_transport)?;
        match status {
            200..=299 => {}
            429 => return Err(BackendError::RateLimited { retry_after }),
            500..=599 => return Err(BackendError::Transport(format!("server status {status}"))),
            _ => return Err(BackendError::Status { code: status, body: text }),
        }
        let mut parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Decode(e.to_string()))?;
        parsed.choices.sort_by_key(|c| c.index.unwrap_or(usize::MAX));
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }
}

fn map_transport(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        other => BackendError::Transport(other.to_string()),
    }
}

impl TextBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<BackendResponse, BackendError> {
        let mut out = self.generate_n(prompt, 1, params)?;
        Ok(out.remove(0))
    }

    /// One request carrying `n`. When the server returns fewer choices, the
    /// remainder is requested again; already delivered choices are kept, so
    /// retries never duplicate them.
    fn generate_n(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<BackendResponse>, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        if n == 0 {
            return Err(BackendError::InvalidParams("n must be at least 1".into()));
        }
        params.validate()?;
        let mut out: Vec<BackendResponse> = Vec::with_capacity(n);
        let mut retries = 0u32;
        while out.len() < n {
            let started = Instant::now();
            let remaining = n - out.len();
            match self.request(prompt, remaining, &params.for_sample(out.len())) {
                Ok(texts) if texts.is_empty() => {
                    return Err(BackendError::Decode("response carried no choices".into()))
                }
                Ok(texts) => {
                    let latency = started.elapsed();
                    out.extend(texts.into_iter().take(remaining).map(|text| BackendResponse {
                        text,
                        latency,
                        backend_id: self.id.clone(),
                    }));
                }
                Err(e) if e.is_retryable() && retries < self.config.max_retries => {
                    let wait = match &e {
                        BackendError::RateLimited { retry_after } => self.config.backoff(retries, *retry_after),
                        _ => self.config.backoff(retries, None),
                    };
                    log::warn!("retrying after {e} (attempt {}), waiting {wait:?}", retries + 1);
                    std::thread::sleep(wait);
                    retries += 1;
                }
                Err(e) => {
                    return Err(if n > 1 {
                        BackendError::BatchFailed {
                            index: out.len(),
                            source: Box::new(e),
                        }
                    } else {
                        e
                    })
                }
            }
        }
        Ok(out)
    }
}
