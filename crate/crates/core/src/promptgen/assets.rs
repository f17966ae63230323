//! System-prompt assets.
//!
//! Defaults are compiled in; a directory of `<name>.txt` files overrides or
//! extends them so prompt wording can change without a rebuild.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::PromptError;

/// Replaced by the codebook block in RAG system prompts.
pub const CODEBOOK_PLACEHOLDER: &str = "{{codebook}}";

const DEFAULTS: &[(&str, &str)] = &[
    ("zero_shot", include_str!("../../assets/prompts/zero_shot.txt")),
    ("rag", include_str!("../../assets/prompts/rag.txt")),
    ("cot", include_str!("../../assets/prompts/cot.txt")),
    ("fine_tune", include_str!("../../assets/prompts/fine_tune.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAssets {
    prompts: BTreeMap<String, String>,
}

impl Default for PromptAssets {
    fn default() -> Self {
        Self {
            prompts: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.trim_end().to_string()))
                .collect(),
        }
    }
}

impl PromptAssets {
    /// Built-in defaults overlaid with every `*.txt` file in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| PromptError::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        };
        let mut assets = Self::default();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                let name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                let text = std::fs::read_to_string(&path).map_err(io)?;
                assets.prompts.insert(name, text.trim_end().to_string());
            }
        }
        Ok(assets)
    }

    pub fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.prompts
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::UnknownAsset {
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.prompts.keys().map(String::as_str)
    }
}
