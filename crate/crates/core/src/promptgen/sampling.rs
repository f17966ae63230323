//! Stratified example sampling and explanation lookup.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{render_explanation, ExplainedExample, Ratio};
use crate::corpus::{ExampleSentence, MetaphorType};
use crate::error::PromptError;

/// (conventional, creative) sentence counts for `n` examples.
///
/// `Even` splits in half; `Original` takes `round_half_up(0.9 n)` conventional.
pub fn stratum_sizes(n: usize, ratio: Ratio) -> Result<(usize, usize), PromptError> {
    match ratio {
        _ if n == 0 => Err(PromptError::InvalidExampleCount { n }),
        Ratio::Even if n % 2 == 0 => Ok((n / 2, n / 2)),
        Ratio::Original => {
            let conventional = (9 * n + 5) / 10;
            Ok((conventional, n - conventional))
        }
        _ => Err(PromptError::InvalidExampleCount { n }),
    }
}

/// Draw `n` example sentences without replacement, stratified by metaphor type.
///
/// Only sentences whose spans all share one type belong to a stratum. The
/// result order is shuffled; the same `(pool, n, ratio, seed)` always gives
/// the same output.
pub fn sample_examples(
    pool: &[ExampleSentence],
    n: usize,
    ratio: Ratio,
    seed: u64,
) -> Result<Vec<ExampleSentence>, PromptError> {
    let (n_conventional, n_creative) = stratum_sizes(n, ratio)?;
    if n_creative == 0 {
        log::warn!("{n} examples at the original ratio leaves no creative examples");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (stratum, needed) in [
        (MetaphorType::Conventional, n_conventional),
        (MetaphorType::Creative, n_creative),
    ] {
        let members: Vec<&ExampleSentence> = pool
            .iter()
            .filter(|e| e.uniform_type() == Some(stratum))
            .collect();
        if members.len() < needed {
            return Err(PromptError::InsufficientPool {
                stratum,
                needed,
                available: members.len(),
            });
        }
        let mut idx = index::sample(&mut rng, members.len(), needed).into_vec();
        idx.sort_unstable();
        picked.extend(idx.into_iter().map(|i| members[i].clone()));
    }
    picked.shuffle(&mut rng);
    Ok(picked)
}

/// One explanation record, keyed by the span's char range in its source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    /// Defaults to the span's surface text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    pub basic_meaning: String,
    pub figurative_meaning: String,
}

/// Explanations for gold spans, loaded from a JSON array of [`ExplanationEntry`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Explanations {
    entries: BTreeMap<(String, usize, usize), ExplanationEntry>,
}

impl Explanations {
    pub fn from_entries(entries: impl IntoIterator<Item = ExplanationEntry>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|e| ((e.doc_id.clone(), e.start, e.end), e))
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let io = |message: String| PromptError::Io {
            path: path.to_path_buf(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let entries: Vec<ExplanationEntry> =
            serde_json::from_str(&raw).map_err(|e| io(e.to_string()))?;
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Render one explanation per span, or `None` if any span lacks an entry.
    pub fn explain(&self, example: &ExampleSentence) -> Option<ExplainedExample> {
        let offset = example.source_range.start;
        let mut rendered = Vec::with_capacity(example.sentence.spans.len());
        for span in &example.sentence.spans {
            let key = (
                example.source_doc_id.clone(),
                span.start + offset,
                span.end + offset,
            );
            let entry = self.entries.get(&key)?;
            let word = entry
                .word
                .clone()
                .unwrap_or_else(|| example.sentence.span_text(span).to_string());
            rendered.push(
                render_explanation(&word, &entry.basic_meaning, &entry.figurative_meaning).ok()?,
            );
        }
        ExplainedExample::new(example.clone(), rendered).ok()
    }
}
