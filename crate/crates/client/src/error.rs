use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("gave up after {attempts} attempt(s): {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("no recorded response for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("authentication failed (HTTP {status}): {message}")]
    AuthError { status: u16, message: String },
    #[error("provider rejected the request (HTTP {status}): {message}")]
    ProviderRejected { status: u16, message: String },
    #[error("environment variable {var} is not set")]
    MissingApiKey { var: String },
    #[error("unexpected response body: {0}")]
    InvalidResponse(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("timed out after {waited_secs} s waiting for {what}")]
    Timeout { what: String, waited_secs: u64 },
    #[error("transcript store {path}: {message}")]
    Store { path: PathBuf, message: String },
    #[error("transport error: {0}")]
    Transport(String),
}

impl ClientError {
    pub(crate) fn store(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        ClientError::Store {
            path: path.into(),
            message: e.to_string(),
        }
    }
}
