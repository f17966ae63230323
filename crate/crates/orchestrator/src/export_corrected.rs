//! Apply adjudicated discrepancies to the gold corpus.

use std::collections::BTreeMap;

use metaphor_core::corpus::{AnnotatedDocument, Corpus, MetaphorType, Span};
use metaphor_core::evaluator::{Adjudication, Discrepancy, DiscrepancyKind};
use metaphor_core::text::CharMap;
use serde::{Deserialize, Serialize};

use crate::error::ExportError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportTally {
    pub total: usize,
    pub open: usize,
    pub keep_gold: usize,
    pub accept_model: usize,
    pub edited: usize,
    /// Discrepancies per taxonomy id.
    pub per_taxonomy: BTreeMap<String, usize>,
    /// Documents whose spans changed.
    pub changed_documents: Vec<String>,
}

pub fn tally(discrepancies: &[Discrepancy]) -> ExportTally {
    let mut t = ExportTally {
        total: discrepancies.len(),
        ..Default::default()
    };
    for d in discrepancies {
        match d.adjudication {
            Adjudication::Open => t.open += 1,
            Adjudication::KeepGold => t.keep_gold += 1,
            Adjudication::AcceptModel => t.accept_model += 1,
            Adjudication::Edited => t.edited += 1,
        }
        for label in &d.taxonomy_labels {
            *t.per_taxonomy.entry(label.clone()).or_default() += 1;
        }
    }
    t
}

/// Remove `[start, end)` from every span, trimming whitespace at the cuts and
/// dropping pieces that become empty.
fn subtract(spans: &mut Vec<Span>, map: &CharMap, start: usize, end: usize) {
    let mut out = Vec::with_capacity(spans.len() + 1);
    for s in spans.drain(..) {
        if !s.overlaps(start, end) {
            out.push(s);
            continue;
        }
        for (a, b) in [(s.start, start.min(s.end)), (end.max(s.start), s.end)] {
            if let Some(piece) = trimmed(map, a, b, s.metaphor_type) {
                out.push(piece);
            }
        }
    }
    *spans = out;
}

fn trimmed(map: &CharMap, mut a: usize, mut b: usize, kind: MetaphorType) -> Option<Span> {
    while a < b && map.slice(a, a + 1).chars().all(char::is_whitespace) {
        a += 1;
    }
    while b > a && map.slice(b - 1, b).chars().all(char::is_whitespace) {
        b -= 1;
    }
    (a < b).then(|| Span::new(a, b, kind))
}

/// Add a span, merging it with any span it overlaps.
fn insert(spans: &mut Vec<Span>, mut new: Span) {
    spans.retain(|s| {
        if s.overlaps(new.start, new.end) {
            new.start = new.start.min(s.start);
            new.end = new.end.max(s.end);
            if new.metaphor_type == MetaphorType::Unlabelled {
                new.metaphor_type = s.metaphor_type;
            }
            false
        } else {
            true
        }
    });
    spans.push(new);
    spans.sort_by_key(|s| s.start);
}

fn apply(doc: &AnnotatedDocument, index: usize, d: &Discrepancy, spans: &mut Vec<Span>) -> Result<(), ExportError> {
    let map = CharMap::new(doc.text());
    let (start, end) = d.char_range;
    match (d.adjudication, d.kind) {
        (Adjudication::Open | Adjudication::KeepGold, _) => {}
        (Adjudication::AcceptModel, DiscrepancyKind::FalsePositive) => {
            insert(spans, Span::new(start, end, MetaphorType::Unlabelled));
        }
        (Adjudication::AcceptModel, DiscrepancyKind::FalseNegative) => subtract(spans, &map, start, end),
        (Adjudication::Edited, _) => {
            let edited = d.edited_span.ok_or_else(|| ExportError::InvalidDecision {
                doc_id: d.doc_id.clone(),
                index,
                message: "edited without an edited_span".into(),
            })?;
            if edited.is_empty() || edited.end > map.len() {
                return Err(ExportError::InvalidDecision {
                    doc_id: d.doc_id.clone(),
                    index,
                    message: format!("edited span {}-{} is out of range", edited.start, edited.end),
                });
            }
            let mut kind = edited.metaphor_type;
            spans.retain(|s| {
                let hit = s.overlaps(start, end) || s.overlaps(edited.start, edited.end);
                if hit && kind == MetaphorType::Unlabelled {
                    kind = s.metaphor_type;
                }
                !hit
            });
            insert(spans, Span::new(edited.start, edited.end, kind));
        }
    }
    Ok(())
}

/// Gold corpus with the run's decisions applied, in discrepancy order.
///
/// * `accept_model` on a false positive adds its range as an unlabelled span
///   (merged with any span it overlaps).
/// * `accept_model` on a false negative removes its range from gold spans.
/// * `edited` replaces every gold span overlapping the discrepancy or the
///   edited span with the edited span.
/// * `keep_gold` changes nothing; with `force`, open items count as keep_gold.
pub fn export_corrected_corpus(
    gold: &Corpus,
    discrepancies: &[Discrepancy],
    force: bool,
) -> Result<(Corpus, ExportTally), ExportError> {
    let mut t = tally(discrepancies);
    if t.open > 0 && !force {
        return Err(ExportError::UnadjudicatedRemaining { open: t.open });
    }
    let mut by_doc: BTreeMap<&str, Vec<(usize, &Discrepancy)>> = BTreeMap::new();
    for (i, d) in discrepancies.iter().enumerate() {
        by_doc.entry(d.doc_id.as_str()).or_default().push((i, d));
    }
    let mut corrected = gold.clone();
    for (doc_id, items) in by_doc {
        let doc = gold.get(doc_id).ok_or_else(|| ExportError::UnknownDocument {
            doc_id: doc_id.to_string(),
        })?;
        let mut spans = doc.spans.clone();
        for (i, d) in items {
            apply(doc, i, d, &mut spans)?;
        }
        if spans != doc.spans {
            let updated =
                AnnotatedDocument::new(doc.doc.clone(), spans).map_err(|e| ExportError::InvalidDecision {
                    doc_id: doc_id.to_string(),
                    index: 0,
                    message: e.to_string(),
                })?;
            corrected.replace_document(updated)?;
            t.changed_documents.push(doc_id.to_string());
        }
    }
    Ok((corrected, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use metaphor_core::corpus::parse_inline;
    use metaphor_core::evaluator::extract_discrepancies;

    fn setup(gold: &str, pred: &str) -> (Corpus, Vec<Discrepancy>) {
        let g = parse_inline("d", gold).unwrap();
        let p = parse_inline("d", pred).unwrap();
        let tokens = g.tokens();
        let n = tokens.len();
        let ds = extract_discrepancies(
            "d",
            g.text(),
            &tokens,
            &g.token_labels(&tokens),
            &p.token_labels(&tokens),
            &vec![false; n],
            2,
        )
        .unwrap();
        (Corpus::new(vec![g]).unwrap(), ds)
    }

    fn text_of(c: &Corpus) -> String {
        metaphor_core::corpus::serialize_inline(c.get("d").unwrap(), false)
    }

    #[test]
    fn open_items_block_export_without_force() {
        let (c, ds) = setup("a <Metaphor>storm</Metaphor> here", "a storm here");
        assert!(matches!(
            export_corrected_corpus(&c, &ds, false),
            Err(ExportError::UnadjudicatedRemaining { open: 1 })
        ));
        let (out, t) = export_corrected_corpus(&c, &ds, true).unwrap();
        assert_eq!(out, c);
        assert!(t.changed_documents.is_empty());
    }

    #[test]
    fn accept_false_positive_adds_span() {
        let (c, mut ds) = setup("it tells the tale", "it tells the <Metaphor>tale</Metaphor>");
        ds[0].adjudication = Adjudication::AcceptModel;
        let (out, _) = export_corrected_corpus(&c, &ds, false).unwrap();
        assert_eq!(text_of(&out), "it tells the <Metaphor>tale</Metaphor>");
    }

    #[test]
    fn accept_false_negative_trims_gold() {
        let (c, mut ds) = setup(
            "it <Metaphor>tells the tale</Metaphor> well",
            "it tells the <Metaphor>tale</Metaphor> well",
        );
        assert_eq!(ds.len(), 1);
        ds[0].adjudication = Adjudication::AcceptModel;
        let (out, t) = export_corrected_corpus(&c, &ds, false).unwrap();
        assert_eq!(text_of(&out), "it tells the <Metaphor>tale</Metaphor> well");
        assert_eq!(t.changed_documents, vec!["d".to_string()]);
    }

    #[test]
    fn neighbouring_false_positive_becomes_its_own_span() {
        let (c, mut ds) = setup("the <Metaphor>storm</Metaphor> tossed", "the <Metaphor>storm tossed</Metaphor>");
        ds[0].adjudication = Adjudication::AcceptModel;
        let (out, _) = export_corrected_corpus(&c, &ds, false).unwrap();
        assert_eq!(text_of(&out), "the <Metaphor>storm</Metaphor> <Metaphor>tossed</Metaphor>");
    }

    #[test]
    fn edited_span_replaces_overlapping_gold() {
        let (c, mut ds) = setup(
            "it <Metaphor>tells the tale</Metaphor> well",
            "it tells the <Metaphor>tale</Metaphor> well",
        );
        ds[0].adjudication = Adjudication::Edited;
        ds[0].edited_span = Some(Span::new(9, 17, MetaphorType::Unlabelled));
        let (out, _) = export_corrected_corpus(&c, &ds, false).unwrap();
        assert_eq!(text_of(&out), "it tells <Metaphor>the tale</Metaphor> well");
        let typed = metaphor_core::corpus::serialize_inline(out.get("d").unwrap(), true);
        assert!(parse_inline("d", &typed).is_ok());
    }

    #[test]
    fn edited_without_span_is_rejected() {
        let (c, mut ds) = setup("a <Metaphor>storm</Metaphor> here", "a storm here");
        ds[0].adjudication = Adjudication::Edited;
        assert!(matches!(
            export_corrected_corpus(&c, &ds, false),
            Err(ExportError::InvalidDecision { .. })
        ));
    }
}
