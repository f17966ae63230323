//! Prompt assembly for every method/variant cell: zero-shot, few-shot,
//! chain-of-thought, codebook-grounded (RAG) and fine-tuned inference.
//!
//! All builders are pure; any randomness comes in as an explicit seed.

mod assets;
mod cells;
mod codebook;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::corpus::{serialize_inline, ExampleSentence, RawDocument, SentenceSpan};
use crate::error::PromptError;

pub use assets::{PromptAssets, CODEBOOK_PLACEHOLDER};
pub use cells::{PromptCell, PromptContext};
pub use codebook::{retrieve_chunks, Codebook, CodebookChunk, RagMode, RetrievedChunk};
pub use sampling::{sample_examples, stratum_sizes, Explanations, ExplanationEntry};

pub const BEGIN_SENTINEL: &str = "---BEGIN ANNOTATED TEXT---";
pub const END_SENTINEL: &str = "---END ANNOTATED TEXT---";

const TAG_REQUEST: &str =
    "Identify all metaphorical expressions in the following {unit} and enclose each one in <Metaphor> and </Metaphor> tags.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    FewShot,
    Cot,
    Rag,
    /// Inference with a fine-tuned model: system prompt plus the bare text.
    FineTuned,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero_shot",
            Strategy::FewShot => "few_shot",
            Strategy::Cot => "cot",
            Strategy::Rag => "rag",
            Strategy::FineTuned => "fine_tuned",
        }
    }
}

/// Conventional-to-creative balance of sampled examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ratio {
    #[serde(rename = "even")]
    Even,
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl Ratio {
    pub fn as_str(self) -> &'static str {
        match self {
            Ratio::Even => "even",
            Ratio::Original => "original",
            Ratio::NotApplicable => "n/a",
        }
    }
}

/// Where an in-prompt example came from; its tokens are masked during scoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExampleRef {
    pub source_doc_id: String,
    pub range: SentenceSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
    pub strategy: Strategy,
    pub n_examples: usize,
    pub ratio: Ratio,
    pub doc_id: String,
    pub expects_explanations: bool,
    pub example_sources: Vec<ExampleRef>,
}

impl PromptBundle {
    /// Check the role-ordering rules: system first, user last, and strict
    /// user/assistant alternation in between.
    pub fn check_structure(&self) -> Result<(), String> {
        let m = &self.messages;
        if m.len() < 2 {
            return Err(format!("bundle has {} messages", m.len()));
        }
        if m[0].role != Role::System {
            return Err("first message is not a system message".into());
        }
        if m[m.len() - 1].role != Role::User {
            return Err("last message is not a user message".into());
        }
        let middle = &m[1..m.len() - 1];
        if middle.len() != 2 * self.n_examples {
            return Err(format!(
                "expected {} example messages, found {}",
                2 * self.n_examples,
                middle.len()
            ));
        }
        for (i, msg) in middle.iter().enumerate() {
            let want = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if msg.role != want {
                return Err(format!("message {} should be {:?}", i + 1, want));
            }
        }
        if m.iter().any(|msg| msg.content.is_empty()) {
            return Err("empty message content".into());
        }
        if self.expects_explanations != (self.strategy == Strategy::Cot) {
            return Err("expects_explanations must be set exactly for cot".into());
        }
        Ok(())
    }
}

/// An example sentence with one rendered explanation per span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainedExample {
    pub example: ExampleSentence,
    pub explanations: Vec<String>,
}

impl ExplainedExample {
    pub fn new(example: ExampleSentence, explanations: Vec<String>) -> Result<Self, PromptError> {
        if explanations.len() != example.sentence.spans.len() {
            return Err(PromptError::IncompleteExplanations {
                doc_id: example.source_doc_id.clone(),
                spans: example.sentence.spans.len(),
                explanations: explanations.len(),
            });
        }
        Ok(Self {
            example,
            explanations,
        })
    }
}

/// Fill the explanation template for one metaphorical expression.
pub fn render_explanation(
    word: &str,
    basic_meaning: &str,
    figurative_meaning: &str,
) -> Result<String, PromptError> {
    for (field, value) in [
        ("word", word),
        ("basic_meaning", basic_meaning),
        ("figurative_meaning", figurative_meaning),
    ] {
        if value.trim().is_empty() {
            return Err(PromptError::EmptyArgument { field });
        }
    }
    Ok(format!(
        "The word \"{word}\" has a more basic contemporary meaning: in other contexts, it refers to {basic_meaning}. \
In this example, it describes {figurative_meaning} by comparing them to something literally {basic_meaning}, \
which makes it a metaphorical usage."
    ))
}

fn has_sentinel(content: &str) -> bool {
    content
        .lines()
        .any(|l| l.trim() == BEGIN_SENTINEL || l.trim() == END_SENTINEL)
}

fn check_sentinel(location: &str, content: &str) -> Result<(), PromptError> {
    if has_sentinel(content) {
        return Err(PromptError::SentinelInContent {
            location: location.to_string(),
        });
    }
    Ok(())
}

fn request(unit: &str, body: &str) -> String {
    let label = if unit == "sentence" { "Sentence" } else { "Text" };
    format!("{}\n\n{label}:\n{body}", TAG_REQUEST.replace("{unit}", unit))
}

fn document_request(doc: &RawDocument) -> String {
    request("text", &doc.text)
}

fn cot_document_request(doc: &RawDocument) -> String {
    format!(
        "{} Explain each expression you tag, as in the examples above. After your explanations, \
give the complete annotated text between a line reading {BEGIN_SENTINEL} and a line reading {END_SENTINEL}.\n\nText:\n{}",
        TAG_REQUEST.replace("{unit}", "text"),
        doc.text
    )
}

fn example_ref(e: &ExampleSentence) -> ExampleRef {
    ExampleRef {
        source_doc_id: e.source_doc_id.clone(),
        range: e.source_range,
    }
}

fn common_checks(doc: &RawDocument, system_prompt: &str) -> Result<(), PromptError> {
    if system_prompt.trim().is_empty() {
        return Err(PromptError::EmptyArgument {
            field: "system_prompt",
        });
    }
    check_sentinel("system prompt", system_prompt)?;
    check_sentinel(&format!("document {}", doc.id), &doc.text)
}

pub fn build_zero_shot(doc: &RawDocument, system_prompt: &str) -> Result<PromptBundle, PromptError> {
    common_checks(doc, system_prompt)?;
    Ok(PromptBundle {
        messages: vec![
            Message::new(Role::System, system_prompt),
            Message::new(Role::User, document_request(doc)),
        ],
        strategy: Strategy::ZeroShot,
        n_examples: 0,
        ratio: Ratio::NotApplicable,
        doc_id: doc.id.clone(),
        expects_explanations: false,
        example_sources: Vec::new(),
    })
}

/// Inference prompt for a fine-tuned model; mirrors the training record layout.
pub fn build_fine_tuned(doc: &RawDocument, system_prompt: &str) -> Result<PromptBundle, PromptError> {
    common_checks(doc, system_prompt)?;
    Ok(PromptBundle {
        messages: vec![
            Message::new(Role::System, system_prompt),
            Message::new(Role::User, doc.text.clone()),
        ],
        strategy: Strategy::FineTuned,
        n_examples: 0,
        ratio: Ratio::NotApplicable,
        doc_id: doc.id.clone(),
        expects_explanations: false,
        example_sources: Vec::new(),
    })
}

pub fn build_few_shot(
    doc: &RawDocument,
    examples: &[ExampleSentence],
    ratio: Ratio,
    system_prompt: &str,
) -> Result<PromptBundle, PromptError> {
    common_checks(doc, system_prompt)?;
    if examples.is_empty() {
        return Err(PromptError::EmptyArgument { field: "examples" });
    }
    let mut messages = vec![Message::new(Role::System, system_prompt)];
    for e in examples {
        check_sentinel("example", &e.sentence.doc.text)?;
        messages.push(Message::new(Role::User, request("sentence", e.sentence.text())));
        messages.push(Message::new(Role::Assistant, serialize_inline(&e.sentence, false)));
    }
    messages.push(Message::new(Role::User, document_request(doc)));
    Ok(PromptBundle {
        messages,
        strategy: Strategy::FewShot,
        n_examples: examples.len(),
        ratio,
        doc_id: doc.id.clone(),
        expects_explanations: false,
        example_sources: examples.iter().map(example_ref).collect(),
    })
}

pub fn build_cot(
    doc: &RawDocument,
    examples: &[ExplainedExample],
    ratio: Ratio,
    system_prompt: &str,
) -> Result<PromptBundle, PromptError> {
    common_checks(doc, system_prompt)?;
    if examples.is_empty() {
        return Err(PromptError::EmptyArgument { field: "examples" });
    }
    let mut messages = vec![Message::new(Role::System, system_prompt)];
    for ex in examples {
        let e = &ex.example;
        if ex.explanations.len() != e.sentence.spans.len() {
            return Err(PromptError::IncompleteExplanations {
                doc_id: e.source_doc_id.clone(),
                spans: e.sentence.spans.len(),
                explanations: ex.explanations.len(),
            });
        }
        check_sentinel("example", &e.sentence.doc.text)?;
        for x in &ex.explanations {
            check_sentinel("explanation", x)?;
        }
        messages.push(Message::new(Role::User, request("sentence", e.sentence.text())));
        messages.push(Message::new(
            Role::Assistant,
            format!(
                "{}\n\n{}",
                serialize_inline(&e.sentence, false),
                ex.explanations.join("\n")
            ),
        ));
    }
    messages.push(Message::new(Role::User, cot_document_request(doc)));
    Ok(PromptBundle {
        messages,
        strategy: Strategy::Cot,
        n_examples: examples.len(),
        ratio,
        doc_id: doc.id.clone(),
        expects_explanations: true,
        example_sources: examples.iter().map(|x| example_ref(&x.example)).collect(),
    })
}

pub fn build_rag(
    doc: &RawDocument,
    codebook: &Codebook,
    mode: RagMode,
    k: usize,
    system_prompt: &str,
) -> Result<PromptBundle, PromptError> {
    common_checks(doc, system_prompt)?;
    if codebook.body.trim().is_empty() {
        return Err(PromptError::EmptyArgument { field: "codebook" });
    }
    let injected = match mode {
        RagMode::Full => codebook.body.clone(),
        RagMode::Retrieved => {
            let mut picked: Vec<usize> = retrieve_chunks(codebook, &doc.text, k)?
                .into_iter()
                .map(|c| c.index)
                .collect();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|i| codebook.chunks[i].text.as_str())
                .collect::<String>()
        }
    };
    check_sentinel("codebook", &injected)?;
    let block = format!(
        "=== CODEBOOK: {} ===\n{}\n=== END OF CODEBOOK ===",
        codebook.title,
        injected.trim_end_matches('\n')
    );
    let system = if system_prompt.contains(assets::CODEBOOK_PLACEHOLDER) {
        system_prompt.replace(assets::CODEBOOK_PLACEHOLDER, &block)
    } else {
        format!("{}\n\n{block}", system_prompt.trim_end())
    };
    Ok(PromptBundle {
        messages: vec![
            Message::new(Role::System, system),
            Message::new(Role::User, document_request(doc)),
        ],
        strategy: Strategy::Rag,
        n_examples: 0,
        ratio: Ratio::NotApplicable,
        doc_id: doc.id.clone(),
        expects_explanations: false,
        example_sources: Vec::new(),
    })
}
