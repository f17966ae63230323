//! Projection of predicted tags onto original tokens and token-level scoring.

use serde::{Deserialize, Serialize};

use super::align::AlignmentReport;
use super::sanitize::{lenient_parse, SanitizedAnnotation};
use crate::corpus::{span_labels, tokenize, Token};
use crate::error::EvalError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// (precision, recall, f1) with the zero-denominator conventions:
    /// nothing predicted and nothing gold is perfect agreement; otherwise an
    /// empty denominator gives 0 for that measure.
    pub fn prf(&self) -> (f64, f64, f64) {
        let (tp, fp, fn_) = (self.tp as f64, self.fp as f64, self.fn_ as f64);
        if self.tp + self.fp + self.fn_ == 0 {
            return (1.0, 1.0, 1.0);
        }
        let precision = if self.tp + self.fp == 0 { 0.0 } else { tp / (tp + fp) };
        let recall = if self.tp + self.fn_ == 0 { 0.0 } else { tp / (tp + fn_) };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        (precision, recall, f1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Tokens not masked out.
    pub scored_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fidelity: f64,
    /// Original tokens missing from the model's echo (scored as negative).
    pub excluded_token_count: usize,
    /// Tokens inside in-prompt example sentences (not scored).
    pub masked_token_count: usize,
    pub scored_token_count: usize,
}

/// Predicted labels over the original tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub labels: Vec<bool>,
    pub excluded_token_count: usize,
}

/// Carry predicted spans over to original tokens through the alignment.
///
/// An original token is positive iff its matched output token overlaps a
/// predicted span. Unmatched original tokens are negative.
pub fn project_labels(
    sanitized: &SanitizedAnnotation,
    alignment: &AlignmentReport,
    original_tokens: &[Token],
) -> Projection {
    let (stripped, spans) = lenient_parse(&sanitized.annotated_text, &mut Vec::new());
    let output_tokens = tokenize(&stripped);
    let output_labels = span_labels(&output_tokens, &spans);
    let mut labels = vec![false; original_tokens.len()];
    for &(orig, out) in &alignment.matched_pairs {
        labels[orig] = output_labels[out];
    }
    Projection {
        labels,
        excluded_token_count: alignment.unmatched_original.len(),
    }
}

/// Token-level confusion counts and measures over unmasked tokens.
pub fn score_tokens(gold: &[bool], pred: &[bool], mask: &[bool]) -> Result<TokenScore, EvalError> {
    if gold.len() != pred.len() || gold.len() != mask.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
            mask: mask.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    let mut scored_tokens = 0;
    for ((&g, &p), &masked) in gold.iter().zip(pred).zip(mask) {
        if masked {
            continue;
        }
        scored_tokens += 1;
        match (g, p) {
            (true, true) => counts.tp += 1,
            (false, true) => counts.fp += 1,
            (true, false) => counts.fn_ += 1,
            (false, false) => {}
        }
    }
    let (precision, recall, f1) = counts.prf();
    Ok(TokenScore {
        counts,
        precision,
        recall,
        f1,
        scored_tokens,
    })
}
