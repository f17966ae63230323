//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use metaphor_client::{Mode, ProviderConfig};
use metaphor_core::promptgen::{RagMode, Ratio};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZeroShot,
    FewShot,
    Cot,
    Rag,
    FineTune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    Open,
    Closed,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::Open => "open",
            ModelType::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Label used in reports and output paths.
    pub name: String,
    pub model_type: ModelType,
    #[serde(default)]
    pub reasoning: bool,
    pub provider: ProviderConfig,
}

fn default_repetitions() -> u32 {
    5
}
fn default_true() -> bool {
    true
}
fn default_fidelity_floor() -> f64 {
    metaphor_core::evaluator::DEFAULT_FIDELITY_FLOOR
}
fn default_candidate_floor() -> f64 {
    metaphor_core::evaluator::DEFAULT_CANDIDATE_FLOOR
}
fn default_context_width() -> usize {
    5
}
fn default_rag_mode() -> RagMode {
    RagMode::Full
}
fn default_rag_k() -> usize {
    3
}
fn default_split_fraction() -> f64 {
    0.8
}
fn default_poll_secs() -> u64 {
    30
}
fn default_finetune_timeout_secs() -> u64 {
    6 * 3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus_path: PathBuf,
    #[serde(default)]
    pub codebook_path: Option<PathBuf>,
    #[serde(default)]
    pub explanations_path: Option<PathBuf>,
    /// Directory of `<name>.txt` system prompts overriding the built-in ones.
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    pub models: Vec<ModelSpec>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub n_examples: Vec<usize>,
    #[serde(default)]
    pub ratios: Vec<Ratio>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    pub mode: Mode,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/transcripts`.
    #[serde(default)]
    pub transcripts_dir: Option<PathBuf>,
    /// Draw new few-shot/CoT examples for every repetition.
    #[serde(default = "default_true")]
    pub resample_examples: bool,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_fidelity_floor")]
    pub fidelity_floor: f64,
    #[serde(default = "default_candidate_floor")]
    pub candidate_floor: f64,
    #[serde(default = "default_context_width")]
    pub context_width: usize,
    #[serde(default = "default_rag_mode")]
    pub rag_mode: RagMode,
    #[serde(default = "default_rag_k")]
    pub rag_k: usize,
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
    #[serde(default = "default_poll_secs")]
    pub finetune_poll_secs: u64,
    #[serde(default = "default_finetune_timeout_secs")]
    pub finetune_timeout_secs: u64,
    /// Also report F1 from tokens pooled over all documents of a run.
    #[serde(default)]
    pub pooled: bool,
}

impl ExperimentConfig {
    /// Parse a config file; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg: Self = toml::from_str(&raw).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_path);
        fix(&mut self.output_dir);
        for p in [
            &mut self.codebook_path,
            &mut self.explanations_path,
            &mut self.prompts_dir,
            &mut self.transcripts_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.repetitions == 0 {
            return invalid("repetitions must be at least 1".into());
        }
        if self.models.is_empty() {
            return invalid("no models configured".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            if !names.insert(&m.name) {
                return invalid(format!("duplicate model name {}", m.name));
            }
            if m.name.is_empty() || m.name.contains(['/', '\\']) || m.name.starts_with('.') {
                return invalid(format!("model name {:?} cannot be used as a path component", m.name));
            }
            m.provider
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("model {}: {e}", m.name)))?;
        }
        if self.n_examples.iter().any(|&n| n == 0) {
            return invalid("n_examples entries must be positive".into());
        }
        if self.ratios.contains(&Ratio::NotApplicable) {
            return invalid("ratios may only contain even and original".into());
        }
        if !(0.0..=1.0).contains(&self.fidelity_floor) || !(0.0..=1.0).contains(&self.candidate_floor) {
            return invalid("floors must lie in [0, 1]".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return invalid("split_fraction must lie in (0, 1)".into());
        }
        if self.methods.contains(&Method::Rag) && self.codebook_path.is_none() {
            return invalid("rag needs codebook_path".into());
        }
        if self.methods.contains(&Method::Cot) && self.explanations_path.is_none() {
            return invalid("cot needs explanations_path".into());
        }
        Ok(())
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.transcripts_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("transcripts"))
    }

    pub fn model(&self, name: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.name == name)
    }
}
