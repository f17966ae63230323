//! Content-addressed store of provider responses.
//!
//! Each response lives in `<fingerprint>.json` under the store directory and
//! `manifest.json` maps fingerprints to those file names.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use metaphor_core::promptgen::Message;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chat::{ChatRequest, ChatResponse};
use crate::error::ClientError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize)]
struct FingerprintInput<'a> {
    model: &'a str,
    repetition: u32,
    messages: &'a [Message],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

/// Hex sha256 over the canonical JSON of model, repetition, messages and
/// (when set) temperature.
pub fn fingerprint(request: &ChatRequest) -> String {
    let input = FingerprintInput {
        model: &request.model_name,
        repetition: request.repetition,
        messages: &request.messages,
        temperature: request.temperature,
    };
    let bytes = serde_json::to_vec(&input).expect("fingerprint input serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug)]
pub struct TranscriptStore {
    dir: PathBuf,
    manifest: Mutex<BTreeMap<String, String>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ClientError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| ClientError::store(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ClientError::store(path, e))
}

impl TranscriptStore {
    /// Open (creating if needed) the store in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ClientError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| ClientError::store(&dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.is_file() {
            let raw = fs::read_to_string(&manifest_path).map_err(|e| ClientError::store(&manifest_path, e))?;
            serde_json::from_str(&raw).map_err(|e| ClientError::store(&manifest_path, e))?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            dir,
            manifest: Mutex::new(manifest),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.manifest.lock().expect("manifest lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, fingerprint: &str) -> bool {
        self.manifest.lock().expect("manifest lock").contains_key(fingerprint)
    }

    pub fn get(&self, fingerprint: &str) -> Result<Option<TranscriptEntry>, ClientError> {
        let file = match self.manifest.lock().expect("manifest lock").get(fingerprint) {
            Some(f) => f.clone(),
            None => return Ok(None),
        };
        let path = self.dir.join(file);
        let raw = fs::read_to_string(&path).map_err(|e| ClientError::store(&path, e))?;
        let entry: TranscriptEntry = serde_json::from_str(&raw).map_err(|e| ClientError::store(&path, e))?;
        Ok(Some(entry))
    }

    /// Persist an entry; an existing fingerprint is left untouched.
    pub fn put(&self, entry: &TranscriptEntry) -> Result<(), ClientError> {
        let mut manifest = self.manifest.lock().expect("manifest lock");
        if manifest.contains_key(&entry.fingerprint) {
            return Ok(());
        }
        let file = format!("{}.json", entry.fingerprint);
        let body = serde_json::to_vec_pretty(entry).expect("entry serializes");
        write_atomic(&self.dir.join(&file), &body)?;
        manifest.insert(entry.fingerprint.clone(), file);
        let mut manifest_json = serde_json::to_vec_pretty(&*manifest).expect("manifest serializes");
        manifest_json.push(b'\n');
        write_atomic(&self.dir.join(MANIFEST_FILE), &manifest_json)
    }
}
