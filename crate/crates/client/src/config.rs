use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ClientError;

fn default_max_parallel() -> usize {
    4
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    5
}
fn default_initial_backoff_ms() -> u64 {
    1000
}
fn default_max_backoff_ms() -> u64 {
    60_000
}

/// Connection settings for one chat-completions compatible endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    /// Base URL up to and including the API version, e.g. `https://api.example.com/v1`.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token. Empty means no auth.
    #[serde(default)]
    pub api_key_ref: String,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_initial_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_ref: String::new(),
            max_parallel: default_max_parallel(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            initial_backoff_ms: default_initial_backoff_ms(),
            max_backoff_ms: default_max_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_parallel == 0 {
            return Err(ClientError::InvalidConfig("max_parallel must be at least 1".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(ClientError::InvalidConfig("model_name is empty".into()));
        }
        if self.timeout_secs == 0 {
            return Err(ClientError::InvalidConfig("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Delay before retry number `retry` (0-based): doubling from the initial
    /// backoff, capped at the maximum.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }

    /// Bearer token from the configured environment variable.
    pub fn api_key(&self) -> Result<Option<String>, ClientError> {
        if self.api_key_ref.is_empty() {
            return Ok(None);
        }
        std::env::var(&self.api_key_ref)
            .map(Some)
            .map_err(|_| ClientError::MissingApiKey {
                var: self.api_key_ref.clone(),
            })
    }

    pub(crate) fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let mut c = ProviderConfig::new("http://x", "m");
        c.initial_backoff_ms = 100;
        c.max_backoff_ms = 1000;
        let ms: Vec<u128> = (0..6).map(|r| c.backoff(r).as_millis()).collect();
        assert_eq!(ms, vec![100, 200, 400, 800, 1000, 1000]);
        assert_eq!(c.backoff(200).as_millis(), 1000);
    }

    #[test]
    fn toml_defaults() {
        let c: ProviderConfig = serde_json::from_str(r#"{"base_url":"http://x/v1/","model_name":"m"}"#).unwrap();
        assert_eq!(c.max_parallel, 4);
        assert_eq!(c.endpoint("/chat/completions"), "http://x/v1/chat/completions");
        c.validate().unwrap();
    }
}
