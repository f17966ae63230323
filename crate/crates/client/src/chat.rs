//! Chat-completions calls with retries, a concurrency bound and record/replay.

use std::sync::Arc;
use std::time::{Duration, Instant};

use metaphor_core::promptgen::Message;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::config::ProviderConfig;
use crate::error::ClientError;
use crate::transcript::{fingerprint, TranscriptEntry, TranscriptStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub model_name: String,
    /// Sent only when set; otherwise the provider default applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Repetition index; part of the fingerprint so each repetition is a separate sample.
    #[serde(default)]
    pub repetition: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// The provider's error message if the body is a standard error object, else the body itself.
pub(crate) fn provider_message(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(|m| m.as_str()).map(str::to_string))
        .unwrap_or_else(|| body.to_string())
}

pub(crate) fn is_transient(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status == StatusCode::REQUEST_TIMEOUT || status.is_server_error()
}

fn retry_after(headers: &reqwest::header::HeaderMap) -> Option<Duration> {
    let value = headers.get(reqwest::header::RETRY_AFTER)?.to_str().ok()?;
    value.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

enum Attempt {
    Done(ChatResponse),
    Retry { error: String, wait: Option<Duration> },
}

/// Client for one provider/model. Cheap to clone; clones share the
/// concurrency limit and transcript store.
#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    config: ProviderConfig,
    mode: Mode,
    store: Option<Arc<TranscriptStore>>,
    limit: Arc<Semaphore>,
    api_key: Option<String>,
}

impl ChatClient {
    /// Record and replay modes need a store. The API key is read here, except in replay.
    pub fn new(config: ProviderConfig, mode: Mode, store: Option<Arc<TranscriptStore>>) -> Result<Self, ClientError> {
        config.validate()?;
        if mode != Mode::Live && store.is_none() {
            return Err(ClientError::InvalidConfig(format!("{mode:?} mode needs a transcript store")));
        }
        let api_key = if mode == Mode::Replay { None } else { config.api_key()? };
        let http = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            http,
            limit: Arc::new(Semaphore::new(config.max_parallel)),
            config,
            mode,
            store,
            api_key,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Same connection settings, different model (e.g. a fine-tuned one).
    pub fn with_model(&self, model_name: &str) -> Self {
        let mut c = self.clone();
        c.config.model_name = model_name.to_string();
        c
    }

    pub async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let fp = fingerprint(request);
        if let Some(store) = &self.store {
            if self.mode != Mode::Live {
                if let Some(entry) = store.get(&fp)? {
                    return Ok(entry.response);
                }
            }
            if self.mode == Mode::Replay {
                return Err(ClientError::ReplayMiss { fingerprint: fp });
            }
        }
        let response = self.send_with_retries(request).await?;
        if let (Mode::Record, Some(store)) = (self.mode, &self.store) {
            store.put(&TranscriptEntry {
                fingerprint: fp,
                request: request.clone(),
                response: response.clone(),
            })?;
        }
        Ok(response)
    }

    async fn send_with_retries(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let _permit = self.limit.acquire().await.expect("semaphore never closed");
        let total = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 1..=total {
            match self.attempt(request, attempt).await? {
                Attempt::Done(r) => return Ok(r),
                Attempt::Retry { error, wait } => {
                    log::warn!("{}: attempt {attempt}/{total} failed: {error}", request.model_name);
                    last_error = error;
                    if attempt < total {
                        tokio::time::sleep(wait.unwrap_or_else(|| self.config.backoff(attempt - 1))).await;
                    }
                }
            }
        }
        Err(ClientError::RetriesExhausted {
            attempts: total,
            last_error,
        })
    }

    async fn attempt(&self, request: &ChatRequest, attempt: u32) -> Result<Attempt, ClientError> {
        let body = WireRequest {
            model: &request.model_name,
            messages: &request.messages,
            temperature: request.temperature,
        };
        let mut builder = self.http.post(self.config.endpoint("chat/completions")).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = match builder.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Ok(Attempt::Retry {
                    error: e.to_string(),
                    wait: None,
                })
            }
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        let status = resp.status();
        let wait = retry_after(resp.headers());
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => {
                return Ok(Attempt::Retry {
                    error: e.to_string(),
                    wait: None,
                })
            }
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        if status.is_success() {
            let wire: WireResponse =
                serde_json::from_str(&text).map_err(|e| ClientError::InvalidResponse(format!("{e}: {text}")))?;
            let choice = wire
                .choices
                .into_iter()
                .next()
                .ok_or_else(|| ClientError::InvalidResponse("no choices".into()))?;
            let usage = wire.usage.map_or_else(Usage::default, |u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            });
            return Ok(Attempt::Done(ChatResponse {
                content: choice.message.content.unwrap_or_default(),
                finish_reason: choice.finish_reason.unwrap_or_else(|| "unknown".into()),
                usage,
                latency_ms,
                attempts: attempt,
            }));
        }
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(ClientError::AuthError {
                status: status.as_u16(),
                message: provider_message(&text),
            });
        }
        if is_transient(status) {
            return Ok(Attempt::Retry {
                error: format!("HTTP {}: {}", status.as_u16(), provider_message(&text)),
                wait,
            });
        }
        Err(ClientError::ProviderRejected {
            status: status.as_u16(),
            message: provider_message(&text),
        })
    }
}
