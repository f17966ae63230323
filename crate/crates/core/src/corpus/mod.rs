//! Annotated corpus: documents, metaphor spans, tokens and sentences.

mod markup;
mod sentences;
mod store;
mod tokenize;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, SpanError};
use crate::text::{char_len, CharMap};

pub use markup::{
    parse_inline, parse_inline_text, serialize_inline, serialize_spans, strip_tags, CLOSE_TAG,
    OPEN_TAG,
};
pub use sentences::{split_sentences, SentenceSpan};
pub use store::{Corpus, TypeEncoding, SIDECAR_FILE};
pub use tokenize::{tokenize, tokens_in_range, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaphorType {
    Conventional,
    Creative,
    Unlabelled,
}

impl MetaphorType {
    pub fn as_str(self) -> &'static str {
        match self {
            MetaphorType::Conventional => "conventional",
            MetaphorType::Creative => "creative",
            MetaphorType::Unlabelled => "unlabelled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
}

/// A metaphor span in char offsets, `start` inclusive and `end` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub metaphor_type: MetaphorType,
}

impl Span {
    pub fn new(start: usize, end: usize, metaphor_type: MetaphorType) -> Self {
        Self {
            start,
            end,
            metaphor_type,
        }
    }

    pub fn range(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

/// Text plus its sorted, non-overlapping metaphor spans.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc: RawDocument,
    pub spans: Vec<Span>,
}

impl AnnotatedDocument {
    /// Build a document, checking span bounds and ordering.
    pub fn new(doc: RawDocument, spans: Vec<Span>) -> Result<Self, SpanError> {
        validate_spans(char_len(&doc.text), &spans)?;
        Ok(Self { doc, spans })
    }

    pub fn id(&self) -> &str {
        &self.doc.id
    }

    pub fn text(&self) -> &str {
        &self.doc.text
    }

    pub fn tokens(&self) -> Vec<Token> {
        tokenize(&self.doc.text)
    }

    /// One flag per token: true when the token intersects any span.
    pub fn token_labels(&self, tokens: &[Token]) -> Vec<bool> {
        span_labels(tokens, &self.spans)
    }

    pub fn span_text(&self, span: &Span) -> &str {
        CharMap::new(&self.doc.text).slice(span.start, span.end)
    }
}

/// Token labels for an arbitrary span list over the same text.
pub fn span_labels(tokens: &[Token], spans: &[Span]) -> Vec<bool> {
    let mut labels = vec![false; tokens.len()];
    for span in spans {
        for i in tokens_in_range(tokens, span.start, span.end) {
            labels[i] = true;
        }
    }
    labels
}

pub fn validate_spans(text_len: usize, spans: &[Span]) -> Result<(), SpanError> {
    let mut prev_end = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.start >= s.end || s.end > text_len {
            return Err(SpanError::OutOfRange {
                start: s.start,
                end: s.end,
                len: text_len,
            });
        }
        if i > 0 && s.start < prev_end {
            return Err(SpanError::Overlap {
                prev_end,
                start: s.start,
            });
        }
        prev_end = s.end;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_texts: usize,
    pub n_sentences: usize,
    pub n_words: usize,
    pub n_metaphor_spans: usize,
    pub mean_text_length_words: f64,
}

pub fn corpus_stats(corpus: &[AnnotatedDocument]) -> CorpusStats {
    let n_texts = corpus.len();
    let (mut n_sentences, mut n_words, mut n_metaphor_spans) = (0, 0, 0);
    for d in corpus {
        n_sentences += split_sentences(d.text()).len();
        n_words += tokenize(d.text()).len();
        n_metaphor_spans += d.spans.len();
    }
    let mean_text_length_words = if n_texts == 0 {
        0.0
    } else {
        n_words as f64 / n_texts as f64
    };
    CorpusStats {
        n_texts,
        n_sentences,
        n_words,
        n_metaphor_spans,
        mean_text_length_words,
    }
}

/// A gold-annotated sentence usable as a prompt example.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExampleSentence {
    pub source_doc_id: String,
    /// Char range of the sentence in its source document.
    pub source_range: SentenceSpan,
    /// The sentence alone, spans relative to its start.
    pub sentence: AnnotatedDocument,
    pub metaphor_types: Vec<MetaphorType>,
}

impl ExampleSentence {
    /// The single type shared by every span, if there is one.
    pub fn uniform_type(&self) -> Option<MetaphorType> {
        let set: BTreeSet<_> = self.metaphor_types.iter().copied().collect();
        if set.len() == 1 {
            set.into_iter().next()
        } else {
            None
        }
    }
}

/// Every sentence holding at least one span that lies entirely inside it.
///
/// Spans crossing a sentence boundary are skipped with a warning. With
/// `require_types`, any unlabelled span among the candidates is an error.
pub fn extract_examples(
    corpus: &[AnnotatedDocument],
    require_types: bool,
) -> Result<Vec<ExampleSentence>, CorpusError> {
    let mut out = Vec::new();
    let mut unlabelled: Option<(String, usize)> = None;
    for d in corpus {
        let map = CharMap::new(d.text());
        let sentences = split_sentences(d.text());
        for s in &d.spans {
            if !sentences.iter().any(|sent| sent.contains(s.start, s.end)) {
                log::warn!(
                    "{}: span ({}, {}) crosses a sentence boundary; not used as an example",
                    d.id(),
                    s.start,
                    s.end
                );
            }
        }
        for (idx, sent) in sentences.iter().enumerate() {
            let spans: Vec<Span> = d
                .spans
                .iter()
                .filter(|s| sent.contains(s.start, s.end))
                .map(|s| Span::new(s.start - sent.start, s.end - sent.start, s.metaphor_type))
                .collect();
            if spans.is_empty() {
                continue;
            }
            let n_unlabelled = spans
                .iter()
                .filter(|s| s.metaphor_type == MetaphorType::Unlabelled)
                .count();
            if n_unlabelled > 0 {
                let entry = unlabelled.get_or_insert((d.id().to_string(), 0));
                entry.1 += n_unlabelled;
            }
            out.push(ExampleSentence {
                source_doc_id: d.id().to_string(),
                source_range: *sent,
                metaphor_types: spans.iter().map(|s| s.metaphor_type).collect(),
                sentence: AnnotatedDocument {
                    doc: RawDocument {
                        id: format!("{}#s{}", d.id(), idx),
                        text: map.slice(sent.start, sent.end).to_string(),
                    },
                    spans,
                },
            });
        }
    }
    if require_types {
        if let Some((doc_id, count)) = unlabelled {
            return Err(CorpusError::MissingTypeLabels { doc_id, count });
        }
    }
    Ok(out)
}
