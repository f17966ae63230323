use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::MetaphorType;

/// Errors from strict inline-tag parsing. Offsets are char offsets into the tagged input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced tag at offset {offset} ({})", if *unclosed { "opened but never closed" } else { "closed but never opened" })]
    UnbalancedTags { offset: usize, unclosed: bool },
    #[error("nested tag at offset {inner} inside tag opened at offset {outer}")]
    NestedTags { outer: usize, inner: usize },
    #[error("empty span opened at offset {offset}")]
    EmptySpan { offset: usize },
    #[error("malformed tag at offset {offset}")]
    MalformedTag { offset: usize },
}

/// Violations of span invariants on an [`AnnotatedDocument`](crate::corpus::AnnotatedDocument).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("span ({start}, {end}) is empty or out of range for text of length {len}")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("span starting at {start} overlaps or precedes the previous span ending at {prev_end}")]
    Overlap { prev_end: usize, start: usize },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("document {id} is empty")]
    EmptyDocument { id: String },
    #[error("duplicate document id {id}")]
    DuplicateId { id: String },
    #[error("span-type sidecar line {line}: {message}")]
    Sidecar { line: usize, message: String },
    #[error("document {id}: {source}")]
    Span {
        id: String,
        #[source]
        source: SpanError,
    },
    #[error("{count} example span(s) carry no conventional/creative label (first in {doc_id})")]
    MissingTypeLabels { doc_id: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("not enough {stratum:?} example sentences: need {needed}, pool has {available}")]
    InsufficientPool {
        stratum: MetaphorType,
        needed: usize,
        available: usize,
    },
    #[error("invalid example count {n} for this ratio")]
    InvalidExampleCount { n: usize },
    #[error("{field} must not be empty")]
    EmptyArgument { field: &'static str },
    #[error("example from {doc_id} has {spans} span(s) but {explanations} explanation(s)")]
    IncompleteExplanations {
        doc_id: String,
        spans: usize,
        explanations: usize,
    },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{location} contains a reserved sentinel line")]
    SentinelInContent { location: String },
    #[error("unknown prompt asset {name}")]
    UnknownAsset { name: String },
    #[error("i/o error reading {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no annotated text found (best candidate fidelity {best_fidelity:.3})")]
    NoAnnotatedTextFound { best_fidelity: f64 },
    #[error("label sequences differ in length: gold {gold}, predicted {pred}, mask {mask}")]
    LengthMismatch { gold: usize, pred: usize, mask: usize },
    #[error("cannot aggregate an empty group")]
    EmptyGroup,
}
