//! Method/variant cells and the prompt each one produces for a document.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    build_cot, build_few_shot, build_fine_tuned, build_rag, build_zero_shot, sample_examples, Codebook,
    Explanations, PromptAssets, PromptBundle, RagMode, Ratio, Strategy,
};
use crate::corpus::{ExampleSentence, RawDocument};
use crate::error::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum PromptCell {
    ZeroShot,
    FewShot { n_examples: usize, ratio: Ratio },
    Cot { n_examples: usize, ratio: Ratio },
    Rag { mode: RagMode, k: usize },
    FineTuned,
}

impl PromptCell {
    pub fn strategy(&self) -> Strategy {
        match self {
            PromptCell::ZeroShot => Strategy::ZeroShot,
            PromptCell::FewShot { .. } => Strategy::FewShot,
            PromptCell::Cot { .. } => Strategy::Cot,
            PromptCell::Rag { .. } => Strategy::Rag,
            PromptCell::FineTuned => Strategy::FineTuned,
        }
    }

    pub fn n_examples(&self) -> Option<usize> {
        match self {
            PromptCell::FewShot { n_examples, .. } | PromptCell::Cot { n_examples, .. } => Some(*n_examples),
            _ => None,
        }
    }

    pub fn ratio(&self) -> Option<Ratio> {
        match self {
            PromptCell::FewShot { ratio, .. } | PromptCell::Cot { ratio, .. } => Some(*ratio),
            _ => None,
        }
    }

    /// Cells whose prompts contain corpus sentences, which must be masked when scoring.
    pub fn uses_examples(&self) -> bool {
        self.n_examples().is_some()
    }

    /// Stable identifier, e.g. `few_shot_n8_original` or `rag_retrieved_k3`.
    pub fn key(&self) -> String {
        match self {
            PromptCell::ZeroShot => "zero_shot".into(),
            PromptCell::FewShot { n_examples, ratio } => format!("few_shot_n{n_examples}_{}", ratio.as_str()),
            PromptCell::Cot { n_examples, ratio } => format!("cot_n{n_examples}_{}", ratio.as_str()),
            PromptCell::Rag { mode: RagMode::Full, .. } => "rag_full".into(),
            PromptCell::Rag { mode: RagMode::Retrieved, k } => format!("rag_retrieved_k{k}"),
            PromptCell::FineTuned => "fine_tuned".into(),
        }
    }

    /// Zero-shot, few-shot and CoT at 4 and 8 examples with even and original
    /// ratios, and full-codebook RAG.
    pub fn standard_grid() -> Vec<PromptCell> {
        let mut cells = vec![PromptCell::ZeroShot];
        for n_examples in [4, 8] {
            for ratio in [Ratio::Even, Ratio::Original] {
                cells.push(PromptCell::FewShot { n_examples, ratio });
            }
        }
        for n_examples in [4, 8] {
            for ratio in [Ratio::Even, Ratio::Original] {
                cells.push(PromptCell::Cot { n_examples, ratio });
            }
        }
        cells.push(PromptCell::Rag {
            mode: RagMode::Full,
            k: 0,
        });
        cells
    }
}

impl fmt::Display for PromptCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Shared inputs for building any cell's prompt.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub pool: &'a [ExampleSentence],
    pub explanations: &'a Explanations,
    pub codebook: Option<&'a Codebook>,
    pub assets: &'a PromptAssets,
}

impl PromptContext<'_> {
    /// Draw the in-prompt examples for a cell; CoT draws only from explained sentences.
    pub fn sample(&self, cell: &PromptCell, seed: u64) -> Result<Vec<ExampleSentence>, PromptError> {
        match *cell {
            PromptCell::FewShot { n_examples, ratio } => sample_examples(self.pool, n_examples, ratio, seed),
            PromptCell::Cot { n_examples, ratio } => {
                let explained: Vec<ExampleSentence> = self
                    .pool
                    .iter()
                    .filter(|e| self.explanations.explain(e).is_some())
                    .cloned()
                    .collect();
                sample_examples(&explained, n_examples, ratio, seed)
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Prompt for `doc` using examples previously drawn with [`Self::sample`].
    pub fn build(
        &self,
        cell: &PromptCell,
        doc: &RawDocument,
        examples: &[ExampleSentence],
    ) -> Result<PromptBundle, PromptError> {
        match *cell {
            PromptCell::ZeroShot => build_zero_shot(doc, self.assets.get("zero_shot")?),
            PromptCell::FewShot { ratio, .. } => build_few_shot(doc, examples, ratio, self.assets.get("zero_shot")?),
            PromptCell::Cot { ratio, .. } => {
                let explained = examples
                    .iter()
                    .map(|e| {
                        self.explanations.explain(e).ok_or_else(|| PromptError::IncompleteExplanations {
                            doc_id: e.source_doc_id.clone(),
                            spans: e.sentence.spans.len(),
                            explanations: 0,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                build_cot(doc, &explained, ratio, self.assets.get("cot")?)
            }
            PromptCell::Rag { mode, k } => {
                let codebook = self.codebook.ok_or(PromptError::EmptyArgument { field: "codebook" })?;
                build_rag(doc, codebook, mode, k, self.assets.get("rag")?)
            }
            PromptCell::FineTuned => build_fine_tuned(doc, self.assets.get("fine_tune")?),
        }
    }
}
