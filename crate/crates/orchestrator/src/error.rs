use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("the configured methods and variants produce no cells")]
    EmptyMatrix,
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("address {0} is already in use")]
    AddressInUse(String),
    #[error("corrupt discrepancy report {path}: {message}")]
    CorruptReport { path: PathBuf, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{open} discrepancies are still open; pass force to treat them as keep_gold")]
    UnadjudicatedRemaining { open: usize },
    #[error("document {doc_id} not found in the gold corpus")]
    UnknownDocument { doc_id: String },
    #[error("discrepancy {index} in {doc_id}: {message}")]
    InvalidDecision {
        doc_id: String,
        index: usize,
        message: String,
    },
    #[error(transparent)]
    Corpus(#[from] metaphor_core::CorpusError),
}
