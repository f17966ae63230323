//! Maximal runs of disagreement between gold and predicted token labels.

use serde::{Deserialize, Serialize};

use crate::corpus::{Span, Token};
use crate::error::EvalError;
use crate::text::CharMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyKind {
    /// Model tagged, gold did not.
    FalsePositive,
    /// Gold tagged, model did not.
    FalseNegative,
}

/// Reasons for human/model disagreement observed when reviewing model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyLabel {
    Decomposability,
    DegreeOfConventionality,
    SourceTargetDistinction,
    ExplicitComparison,
    GrammaticalCue,
    ComparisonRelationship,
    Personification,
    PhraseLevelMeaning,
    SourceTargetConfusion,
}

impl TaxonomyLabel {
    pub const ALL: [TaxonomyLabel; 9] = [
        TaxonomyLabel::Decomposability,
        TaxonomyLabel::DegreeOfConventionality,
        TaxonomyLabel::SourceTargetDistinction,
        TaxonomyLabel::ExplicitComparison,
        TaxonomyLabel::GrammaticalCue,
        TaxonomyLabel::ComparisonRelationship,
        TaxonomyLabel::Personification,
        TaxonomyLabel::PhraseLevelMeaning,
        TaxonomyLabel::SourceTargetConfusion,
    ];

    /// Identifier used in stored adjudications.
    pub fn id(self) -> &'static str {
        match self {
            TaxonomyLabel::Decomposability => "decomposability",
            TaxonomyLabel::DegreeOfConventionality => "degree_of_conventionality",
            TaxonomyLabel::SourceTargetDistinction => "source_target_distinction",
            TaxonomyLabel::ExplicitComparison => "explicit_comparison",
            TaxonomyLabel::GrammaticalCue => "grammatical_cue",
            TaxonomyLabel::ComparisonRelationship => "comparison_relationship",
            TaxonomyLabel::Personification => "personification",
            TaxonomyLabel::PhraseLevelMeaning => "phrase_level_meaning",
            TaxonomyLabel::SourceTargetConfusion => "source_target_confusion",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TaxonomyLabel::Decomposability => "Decomposability",
            TaxonomyLabel::DegreeOfConventionality => "Degree of conventionality",
            TaxonomyLabel::SourceTargetDistinction => {
                "Difficulties in perceiving a source\u{2013}target distinction"
            }
            TaxonomyLabel::ExplicitComparison => "Explicit comparisons",
            TaxonomyLabel::GrammaticalCue => "Grammatical uses that cue metaphoricity",
            TaxonomyLabel::ComparisonRelationship => {
                "Difficulties in perceiving a relationship based on comparison"
            }
            TaxonomyLabel::Personification => "Personification",
            TaxonomyLabel::PhraseLevelMeaning => "Phrase-level meaning",
            TaxonomyLabel::SourceTargetConfusion => "Source target confusion and twice true",
        }
    }
}

/// One entry of a taxonomy vocabulary as served to reviewers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub id: String,
    pub name: String,
}

/// The nine built-in discrepancy categories.
pub fn default_taxonomy() -> Vec<TaxonomyEntry> {
    TaxonomyLabel::ALL
        .iter()
        .map(|l| TaxonomyEntry {
            id: l.id().to_string(),
            name: l.display_name().to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjudication {
    #[default]
    Open,
    KeepGold,
    AcceptModel,
    Edited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub doc_id: String,
    pub kind: DiscrepancyKind,
    /// Token indices, end exclusive.
    pub token_range: (usize, usize),
    /// Char offsets of the run in the document, end exclusive.
    pub char_range: (usize, usize),
    pub surface: String,
    pub context: String,
    /// Char offsets of `context` in the document.
    pub context_range: (usize, usize),
    /// Taxonomy entry ids; a discrepancy may fall under several categories.
    #[serde(default)]
    pub taxonomy_labels: Vec<String>,
    #[serde(default)]
    pub adjudication: Adjudication,
    #[serde(default)]
    pub edited_span: Option<Span>,
    #[serde(default)]
    pub revision: u64,
}

/// Maximal false-positive and false-negative token runs, each with ±`width`
/// tokens of context. Masked tokens are never part of a discrepancy.
pub fn extract_discrepancies(
    doc_id: &str,
    text: &str,
    tokens: &[Token],
    gold: &[bool],
    pred: &[bool],
    mask: &[bool],
    width: usize,
) -> Result<Vec<Discrepancy>, EvalError> {
    let n = tokens.len();
    if gold.len() != n || pred.len() != n || mask.len() != n {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
            mask: mask.len(),
        });
    }
    let kind_at = |i: usize| match (mask[i], gold[i], pred[i]) {
        (false, false, true) => Some(DiscrepancyKind::FalsePositive),
        (false, true, false) => Some(DiscrepancyKind::FalseNegative),
        _ => None,
    };
    let map = CharMap::new(text);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let Some(kind) = kind_at(i) else {
            i += 1;
            continue;
        };
        let start = i;
        while i < n && kind_at(i) == Some(kind) {
            i += 1;
        }
        let char_range = (tokens[start].start, tokens[i - 1].end);
        let ctx_first = start.saturating_sub(width);
        let ctx_last = (i + width).min(n) - 1;
        let context_range = (tokens[ctx_first].start, tokens[ctx_last].end);
        out.push(Discrepancy {
            doc_id: doc_id.to_string(),
            kind,
            token_range: (start, i),
            char_range,
            surface: map.slice(char_range.0, char_range.1).to_string(),
            context: map.slice(context_range.0, context_range.1).to_string(),
            context_range,
            taxonomy_labels: Vec::new(),
            adjudication: Adjudication::Open,
            edited_span: None,
            revision: 0,
        });
    }
    Ok(out)
}
