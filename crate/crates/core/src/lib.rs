//! Core of the metaphor-identification harness: the annotated corpus, prompt
//! assembly for each prompting strategy, and token-level evaluation of model
//! output against gold annotations.

pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod promptgen;
pub mod text;

pub use error::{CorpusError, EvalError, ParseError, PromptError, SpanError};
