//! Scoring of model responses against gold annotations: sanitization,
//! alignment, label projection, token-level scores, aggregation, discrepancy
//! extraction and the statistics export.

mod aggregate;
mod align;
mod discrepancy;
mod export;
mod sanitize;
mod score;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokens_in_range, AnnotatedDocument, Token};
use crate::promptgen::ExampleRef;

pub use aggregate::{aggregate, box_stats, quantile, sv_transform, BoxStats, GroupKey, GroupSummary};
pub use align::{align, align_tokens, fold, lcs_pairs, AlignmentReport};
pub use discrepancy::{
    default_taxonomy, extract_discrepancies, Adjudication, Discrepancy, DiscrepancyKind, TaxonomyEntry, TaxonomyLabel,
};
pub use export::{export_stats_table, StatsInput, StatsMeta, StatsRow, StatsTable, NOT_APPLICABLE, STATS_COLUMNS};
pub use sanitize::{lenient_parse, sanitize_output, ExtractionMethod, SanitizedAnnotation, DEFAULT_CANDIDATE_FLOOR};
pub use score::{project_labels, score_tokens, ConfusionCounts, DocScore, Projection, TokenScore};

/// Alignment fidelity below which a response is not scored.
pub const DEFAULT_FIDELITY_FLOOR: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub candidate_floor: f64,
    pub fidelity_floor: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            candidate_floor: DEFAULT_CANDIDATE_FLOOR,
            fidelity_floor: DEFAULT_FIDELITY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// No block of the response could be read as the annotated text.
    Sanitization,
    /// The echoed text drifted too far from the original to project labels.
    Fidelity,
    /// The request itself failed.
    Transport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
    pub fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub sanitized: SanitizedAnnotation,
    pub score: DocScore,
    pub pred_labels: Vec<bool>,
}

/// Mask over `tokens` covering the example sentences taken from this document.
pub fn example_mask(doc_id: &str, tokens: &[Token], examples: &[ExampleRef]) -> Vec<bool> {
    let mut mask = vec![false; tokens.len()];
    for ex in examples.iter().filter(|e| e.source_doc_id == doc_id) {
        for i in tokens_in_range(tokens, ex.range.start, ex.range.end) {
            mask[i] = true;
        }
    }
    mask
}

/// Full path from a raw response to a document score.
pub fn evaluate_response(
    raw: &str,
    gold: &AnnotatedDocument,
    expects_explanations: bool,
    examples: &[ExampleRef],
    settings: &EvalSettings,
) -> Result<ScoredResponse, Failure> {
    let sanitized = sanitize_output(raw, &gold.doc, expects_explanations, settings.candidate_floor).map_err(|e| {
        let fidelity = match e {
            crate::EvalError::NoAnnotatedTextFound { best_fidelity } => Some(best_fidelity),
            _ => None,
        };
        Failure {
            kind: FailureKind::Sanitization,
            message: e.to_string(),
            fidelity,
        }
    })?;
    let (stripped, _) = lenient_parse(&sanitized.annotated_text, &mut Vec::new());
    let tokens = gold.tokens();
    let alignment = align(&stripped, gold.text());
    if alignment.fidelity < settings.fidelity_floor {
        return Err(Failure {
            kind: FailureKind::Fidelity,
            message: format!(
                "fidelity {:.4} below floor {}",
                alignment.fidelity, settings.fidelity_floor
            ),
            fidelity: Some(alignment.fidelity),
        });
    }
    let projection = project_labels(&sanitized, &alignment, &tokens);
    let gold_labels = gold.token_labels(&tokens);
    let mask = example_mask(gold.id(), &tokens, examples);
    let s = score_tokens(&gold_labels, &projection.labels, &mask).expect("labels built over the same tokens");
    Ok(ScoredResponse {
        sanitized,
        score: DocScore {
            doc_id: gold.id().to_string(),
            counts: s.counts,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            fidelity: alignment.fidelity,
            excluded_token_count: projection.excluded_token_count,
            masked_token_count: mask.iter().filter(|&&m| m).count(),
            scored_token_count: s.scored_tokens,
        },
        pred_labels: projection.labels,
    })
}
