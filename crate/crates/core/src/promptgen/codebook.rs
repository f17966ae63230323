//! Annotation codebook and lexical chunk retrieval.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RagMode {
    /// Inject the whole codebook.
    Full,
    /// Inject the top-k chunks ranked against the document.
    Retrieved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookChunk {
    pub heading: String,
    /// Chunk text including its heading line.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    pub title: String,
    pub body: String,
    pub chunks: Vec<CodebookChunk>,
}

impl Codebook {
    /// Split markdown-like text at top-level (`# `) headings. Text before the
    /// first heading becomes a chunk with an empty heading.
    pub fn parse(body: &str) -> Self {
        let mut chunks: Vec<CodebookChunk> = Vec::new();
        let mut current = CodebookChunk {
            heading: String::new(),
            text: String::new(),
        };
        for line in body.split_inclusive('\n') {
            if let Some(h) = line.strip_prefix("# ") {
                if !current.text.is_empty() {
                    chunks.push(current);
                }
                current = CodebookChunk {
                    heading: h.trim().to_string(),
                    text: String::new(),
                };
            }
            current.text.push_str(line);
        }
        if !current.text.is_empty() {
            chunks.push(current);
        }
        let title = chunks
            .iter()
            .find(|c| !c.heading.is_empty())
            .map(|c| c.heading.clone())
            .unwrap_or_else(|| "Codebook".to_string());
        Self {
            title,
            body: body.to_string(),
            chunks,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| PromptError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self::parse(&body))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub index: usize,
    pub heading: String,
    pub text: String,
    pub score: f64,
}

fn term_counts(text: &str) -> BTreeMap<String, f64> {
    let mut counts = BTreeMap::new();
    for t in tokenize(text) {
        *counts.entry(t.surface.to_lowercase()).or_insert(0.0) += 1.0;
    }
    counts
}

/// Rank chunks by cosine similarity of tf-idf vectors.
///
/// Term frequency is the raw count of lower-cased tokens; idf is
/// `ln((1 + N) / (1 + df)) + 1` over the N chunks. Ties keep chunk order.
pub fn retrieve_chunks(
    codebook: &Codebook,
    query: &str,
    k: usize,
) -> Result<Vec<RetrievedChunk>, PromptError> {
    if k == 0 {
        return Err(PromptError::InvalidK);
    }
    let docs: Vec<BTreeMap<String, f64>> =
        codebook.chunks.iter().map(|c| term_counts(&c.text)).collect();
    let n = docs.len() as f64;
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for d in &docs {
        for term in d.keys() {
            *df.entry(term.as_str()).or_insert(0.0) += 1.0;
        }
    }
    let idf = |term: &str| ((1.0 + n) / (1.0 + df.get(term).copied().unwrap_or(0.0))).ln() + 1.0;

    let query_tf = term_counts(query);
    let query_vec: BTreeMap<&str, f64> = query_tf
        .iter()
        .map(|(t, c)| (t.as_str(), c * idf(t)))
        .collect();
    let query_norm = query_vec.values().map(|w| w * w).sum::<f64>().sqrt();

    let mut scored: Vec<RetrievedChunk> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let weights: Vec<(&str, f64)> = d.iter().map(|(t, c)| (t.as_str(), c * idf(t))).collect();
            let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            let dot: f64 = weights
                .iter()
                .filter_map(|(t, w)| query_vec.get(t).map(|q| q * w))
                .sum();
            let score = if norm == 0.0 || query_norm == 0.0 {
                0.0
            } else {
                dot / (norm * query_norm)
            };
            RetrievedChunk {
                index: i,
                heading: codebook.chunks[i].heading.clone(),
                text: codebook.chunks[i].text.clone(),
                score,
            }
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    scored.truncate(k);
    Ok(scored)
}
