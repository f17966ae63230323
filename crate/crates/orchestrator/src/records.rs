//! Run records and the append-only JSON-lines store that holds them.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use metaphor_core::evaluator::{DocScore, Failure, SanitizedAnnotation};
use metaphor_core::promptgen::{ExampleRef, PromptCell};
use serde::{Deserialize, Serialize};

pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Scored { score: DocScore },
    Failed { failure: Failure },
}

/// The result of one (model, cell, document, repetition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub cell: PromptCell,
    pub doc_id: String,
    pub repetition: u32,
    /// Transcript fingerprint of the request; empty if no request was sent.
    pub fingerprint: String,
    #[serde(default)]
    pub raw_response: Option<String>,
    #[serde(default)]
    pub sanitized: Option<SanitizedAnnotation>,
    #[serde(default)]
    pub fidelity: Option<f64>,
    /// Predicted labels over the gold tokens, when scored.
    #[serde(default)]
    pub pred_labels: Option<Vec<bool>>,
    #[serde(default)]
    pub example_sources: Vec<ExampleRef>,
    #[serde(default)]
    pub fine_tuned_model: Option<String>,
    pub outcome: Outcome,
}

/// Identity of a record; the store keeps at most one record per key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub model: String,
    pub cell: String,
    pub repetition: u32,
    pub doc_id: String,
}

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            model: self.model.clone(),
            cell: self.cell.key(),
            repetition: self.repetition,
            doc_id: self.doc_id.clone(),
        }
    }

    /// Run identifier shared by all documents of one (model, cell, repetition).
    pub fn run_id(&self) -> String {
        run_id(&self.model, &self.cell, self.repetition)
    }

    pub fn score(&self) -> Option<&DocScore> {
        match &self.outcome {
            Outcome::Scored { score } => Some(score),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn failure(&self) -> Option<&Failure> {
        match &self.outcome {
            Outcome::Failed { failure } => Some(failure),
            Outcome::Scored { .. } => None,
        }
    }
}

pub fn run_id(model: &str, cell: &PromptCell, repetition: u32) -> String {
    format!("{model}__{}__r{repetition}", cell.key())
}

/// Read every complete record in `path`. A torn final line (no trailing
/// newline) is ignored; later records replace earlier ones with the same key.
/// The result is sorted by key.
pub fn load_records(path: &Path) -> anyhow::Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let complete = match raw.rfind('\n') {
        Some(i) => &raw[..=i],
        None => "",
    };
    let mut by_key = BTreeMap::new();
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RunRecord =
            serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        by_key.insert(r.key(), r);
    }
    Ok(by_key.into_values().collect())
}

/// Single-writer append handle over `records.jsonl`.
#[derive(Debug)]
pub struct RecordWriter {
    path: PathBuf,
    file: File,
}

impl RecordWriter {
    /// Open for appending, cutting off any torn final line first.
    pub fn open(path: &Path) -> anyhow::Result<Self> {
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut content = Vec::new();
        file.read_to_end(&mut content)?;
        if !content.is_empty() && content.last() != Some(&b'\n') {
            let keep = content.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            log::warn!(
                "{}: dropping {} bytes of an incomplete record",
                path.display(),
                content.len() - keep
            );
            file.set_len(keep as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Append one record and flush it to disk.
    pub fn append(&mut self, record: &RunRecord) -> anyhow::Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .with_context(|| format!("appending to {}", self.path.display()))
    }
}
