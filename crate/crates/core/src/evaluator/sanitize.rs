//! Recover one annotated text from a raw model response.
//!
//! Models do not always return only the tagged text: they add preambles,
//! code fences, explanations, or tag variants such as `<metaphor >`. The
//! sanitizer repairs what it can and records a warning for every repair.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::align::{align_tokens, lcs_pairs};
use super::align::fold;
use crate::corpus::{serialize_spans, tokenize, MetaphorType, RawDocument, Span, CLOSE_TAG, OPEN_TAG};
use crate::error::EvalError;
use crate::promptgen::{BEGIN_SENTINEL, END_SENTINEL};

/// Default fidelity a candidate block needs to count as the model's echo.
pub const DEFAULT_CANDIDATE_FLOOR: f64 = 0.5;

/// Share of a paragraph's tokens that must align to the original for the
/// paragraph to be kept by best-block extraction.
const PARAGRAPH_ECHO_RATIO: f64 = 0.5;

static LENIENT_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<\s*(/)?\s*metaphor\b[^<>]*>").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    Whole,
    SentinelBlock,
    BestAlignedBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedAnnotation {
    /// Canonical inline-tagged text; always parses strictly.
    pub annotated_text: String,
    pub extraction_method: ExtractionMethod,
    pub warnings: Vec<String>,
}

/// Rewrite every tag variant to the canonical `<Metaphor>` / `</Metaphor>`.
fn normalize_tags(text: &str, warnings: &mut Vec<String>) -> String {
    let mut changed = 0;
    let out = LENIENT_TAG.replace_all(text, |caps: &regex::Captures| {
        let canonical = if caps.get(1).is_some() { CLOSE_TAG } else { OPEN_TAG };
        if &caps[0] != canonical {
            changed += 1;
        }
        canonical
    });
    if changed > 0 {
        warnings.push(format!("normalized {changed} non-canonical tag(s)"));
    }
    out.into_owned()
}

/// Parse canonical tags with repairs: nested opens are absorbed, stray closes
/// dropped, empty spans removed and an unclosed span closed at the end.
fn parse_lenient(text: &str, warnings: &mut Vec<String>) -> (String, Vec<Span>) {
    let mut stripped = String::with_capacity(text.len());
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut len = 0usize;
    let (mut nested, mut stray, mut empty) = (0, 0, 0);
    let mut rest = text;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix(OPEN_TAG) {
            if depth == 0 {
                start = len;
            } else {
                nested += 1;
            }
            depth += 1;
            rest = r;
        } else if let Some(r) = rest.strip_prefix(CLOSE_TAG) {
            match depth {
                0 => stray += 1,
                1 => {
                    if len > start {
                        spans.push(Span::new(start, len, MetaphorType::Unlabelled));
                    } else {
                        empty += 1;
                    }
                    depth = 0;
                }
                _ => depth -= 1,
            }
            rest = r;
        } else {
            let c = rest.chars().next().expect("non-empty");
            stripped.push(c);
            len += 1;
            rest = &rest[c.len_utf8()..];
        }
    }
    if depth > 0 {
        warnings.push("closed an unterminated tag at end of text".into());
        if len > start {
            spans.push(Span::new(start, len, MetaphorType::Unlabelled));
        }
    }
    if nested > 0 {
        warnings.push(format!("flattened {nested} nested tag(s)"));
    }
    if stray > 0 {
        warnings.push(format!("dropped {stray} unmatched closing tag(s)"));
    }
    if empty > 0 {
        warnings.push(format!("dropped {empty} empty span(s)"));
    }
    (stripped, spans)
}

/// Canonicalize tags in `text`, returning the stripped text and spans.
pub fn lenient_parse(text: &str, warnings: &mut Vec<String>) -> (String, Vec<Span>) {
    let normalized = normalize_tags(text, warnings);
    parse_lenient(&normalized, warnings)
}

fn strip_code_fence(text: &str, warnings: &mut Vec<String>) -> String {
    let trimmed = text.trim();
    if !trimmed.starts_with("```") {
        return text.to_string();
    }
    let mut lines: Vec<&str> = trimmed.lines().collect();
    lines.remove(0);
    if lines.last().is_some_and(|l| l.trim() == "```") {
        lines.pop();
    }
    warnings.push("removed code fence".into());
    lines.join("\n")
}

/// Drop a leading line such as "Here is your tagged text:".
fn strip_preamble(text: &str, original: &str, warnings: &mut Vec<String>) -> String {
    let body = text.trim_start_matches(['\n', '\r']);
    let Some((first, rest)) = body.split_once('\n') else {
        return text.to_string();
    };
    let line = first.trim();
    let is_preamble = line.ends_with(':')
        && !LENIENT_TAG.is_match(line)
        && !original.trim_start().starts_with(line);
    if is_preamble {
        warnings.push(format!("stripped preamble line {line:?}"));
        rest.to_string()
    } else {
        text.to_string()
    }
}

fn sentinel_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let t = line.trim();
        if t == BEGIN_SENTINEL {
            current = Some(Vec::new());
        } else if t == END_SENTINEL {
            if let Some(lines) = current.take() {
                blocks.push(lines.join("\n"));
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
}

struct Candidate {
    stripped: String,
    spans: Vec<Span>,
    warnings: Vec<String>,
    fidelity: f64,
}

fn candidate(text: &str, original: &RawDocument, mut warnings: Vec<String>) -> Candidate {
    let (stripped, spans) = lenient_parse(text, &mut warnings);
    let fidelity = align_tokens(&tokenize(&stripped), &tokenize(&original.text)).fidelity;
    Candidate {
        stripped,
        spans,
        warnings,
        fidelity,
    }
}

/// Keep the paragraphs that are mostly an echo of the original and join them.
fn best_aligned_block(text: &str, original: &RawDocument) -> Option<String> {
    let normalized = normalize_tags(text, &mut Vec::new());
    let original_terms: Vec<String> = tokenize(&original.text).iter().map(|t| fold(&t.surface)).collect();
    let mut kept = Vec::new();
    for para in normalized.split("\n\n") {
        let (stripped, _) = parse_lenient(para, &mut Vec::new());
        let terms: Vec<String> = tokenize(&stripped).iter().map(|t| fold(&t.surface)).collect();
        if terms.is_empty() {
            continue;
        }
        let matched = lcs_pairs(&original_terms, &terms).len();
        if matched as f64 / terms.len() as f64 >= PARAGRAPH_ECHO_RATIO {
            kept.push(para.trim_matches('\n'));
        }
    }
    if kept.is_empty() {
        None
    } else {
        Some(kept.join("\n\n"))
    }
}

/// Extract the annotated text from a raw response.
///
/// With `expects_explanations`, the sentinel-delimited block is used. Otherwise
/// the whole response minus code fences and a preamble line. If that candidate
/// aligns below `candidate_floor`, the echo paragraphs are extracted instead.
pub fn sanitize_output(
    raw: &str,
    original: &RawDocument,
    expects_explanations: bool,
    candidate_floor: f64,
) -> Result<SanitizedAnnotation, EvalError> {
    let mut warnings = Vec::new();
    let text = if raw.contains('\r') {
        warnings.push("normalized line endings".into());
        raw.replace("\r\n", "\n")
    } else {
        raw.to_string()
    };

    let primary = if expects_explanations {
        let blocks = sentinel_blocks(&text);
        if blocks.is_empty() {
            warnings.push("no sentinel-delimited block found".into());
            None
        } else {
            blocks
                .iter()
                .map(|b| candidate(b, original, warnings.clone()))
                .reduce(|best, c| if c.fidelity > best.fidelity { c } else { best })
                .map(|c| (c, ExtractionMethod::SentinelBlock))
        }
    } else {
        let mut w = warnings.clone();
        let body = strip_code_fence(&text, &mut w);
        let body = strip_preamble(&body, &original.text, &mut w);
        Some((candidate(&body, original, w), ExtractionMethod::Whole))
    };

    let mut best_fidelity = 0.0;
    if let Some((c, method)) = primary {
        if c.fidelity >= candidate_floor {
            return Ok(finish(c, method));
        }
        best_fidelity = c.fidelity;
        warnings.push(format!("primary candidate fidelity {:.3} below floor", c.fidelity));
    }
    if let Some(block) = best_aligned_block(&text, original) {
        let mut w = warnings.clone();
        w.push("extracted best-aligned paragraphs".into());
        let c = candidate(&block, original, w);
        if c.fidelity >= candidate_floor {
            return Ok(finish(c, ExtractionMethod::BestAlignedBlock));
        }
        best_fidelity = f64::max(best_fidelity, c.fidelity);
    }
    Err(EvalError::NoAnnotatedTextFound { best_fidelity })
}

fn finish(c: Candidate, method: ExtractionMethod) -> SanitizedAnnotation {
    SanitizedAnnotation {
        annotated_text: serialize_spans(&c.stripped, &c.spans, false),
        extraction_method: method,
        warnings: c.warnings,
    }
}
