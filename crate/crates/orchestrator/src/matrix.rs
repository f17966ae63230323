//! Expansion of a config into (model, cell) jobs and per-repetition seeds.

use metaphor_core::promptgen::{PromptCell, Ratio, Strategy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Method};
use crate::error::ConfigError;

/// One model under one method/variant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JobCell {
    pub model: String,
    pub cell: PromptCell,
}

impl JobCell {
    /// `<model>__<cell key>`, used in file names and record keys.
    pub fn key(&self) -> String {
        format!("{}__{}", self.model, self.cell.key())
    }
}

/// Coarse method family used in summaries and the stats table.
pub fn method_family(cell: &PromptCell) -> &'static str {
    match cell.strategy() {
        Strategy::ZeroShot | Strategy::FewShot | Strategy::Cot => "prompt_engineering",
        Strategy::Rag => "rag",
        Strategy::FineTuned => "fine_tuning",
    }
}

/// Cells for one model, in method order then n_examples then ratio.
fn cells_for(cfg: &ExperimentConfig, reasoning: bool) -> Vec<PromptCell> {
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut ns = cfg.n_examples.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut ratios: Vec<Ratio> = cfg.ratios.clone();
    ratios.sort();
    ratios.dedup();

    let mut out = Vec::new();
    for m in methods {
        match m {
            Method::ZeroShot => out.push(PromptCell::ZeroShot),
            Method::FewShot | Method::Cot => {
                for &n_examples in &ns {
                    for &ratio in &ratios {
                        out.push(if m == Method::FewShot {
                            PromptCell::FewShot { n_examples, ratio }
                        } else {
                            PromptCell::Cot { n_examples, ratio }
                        });
                    }
                }
            }
            Method::Rag => out.push(PromptCell::Rag {
                mode: cfg.rag_mode,
                k: match cfg.rag_mode {
                    metaphor_core::promptgen::RagMode::Full => 0,
                    metaphor_core::promptgen::RagMode::Retrieved => cfg.rag_k,
                },
            }),
            Method::FineTune if reasoning => {
                log::info!("skipping fine_tune for a reasoning model");
            }
            Method::FineTune => out.push(PromptCell::FineTuned),
        }
    }
    out
}

/// Cross product of models and applicable variants. Zero-shot, RAG and
/// fine-tuning take no n/ratio variants; reasoning models get no fine-tune cell.
pub fn expand_matrix(cfg: &ExperimentConfig) -> Result<Vec<JobCell>, ConfigError> {
    let cells: Vec<JobCell> = cfg
        .models
        .iter()
        .flat_map(|m| {
            cells_for(cfg, m.reasoning).into_iter().map(|cell| JobCell {
                model: m.name.clone(),
                cell,
            })
        })
        .collect();
    if cells.is_empty() {
        return Err(ConfigError::EmptyMatrix);
    }
    Ok(cells)
}

/// Seed for repetition `repetition` of a cell: the first eight bytes
/// (little-endian) of SHA-256 over `"{seed}\0{cell key}\0{repetition}"`.
///
/// The model is not part of the input, so every model sees the same examples
/// and the same fine-tuning split for a given repetition.
pub fn cell_seed(seed: u64, cell: &PromptCell, repetition: u32) -> u64 {
    let digest = Sha256::digest(format!("{seed}\0{}\0{repetition}", cell.key()).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelSpec, ModelType};
    use metaphor_client::{Mode, ProviderConfig};

    fn model(name: &str, reasoning: bool) -> ModelSpec {
        ModelSpec {
            name: name.into(),
            model_type: ModelType::Closed,
            reasoning,
            provider: ProviderConfig::new("http://localhost", name),
        }
    }

    fn config(methods: Vec<Method>, n: Vec<usize>, ratios: Vec<Ratio>) -> ExperimentConfig {
        toml::from_str::<ExperimentConfig>(
            "corpus_path = \"c\"\noutput_dir = \"o\"\nmode = \"replay\"\nmodels = []\nmethods = []\n",
        )
        .map(|mut c| {
            c.models = vec![model("m", false)];
            c.methods = methods;
            c.n_examples = n;
            c.ratios = ratios;
            c.mode = Mode::Replay;
            c
        })
        .unwrap()
    }

    #[test]
    fn few_shot_two_by_two() {
        let c = config(vec![Method::FewShot], vec![4, 8], vec![Ratio::Even, Ratio::Original]);
        assert_eq!(expand_matrix(&c).unwrap().len(), 4);
    }

    #[test]
    fn zero_shot_ignores_variants() {
        let c = config(vec![Method::ZeroShot], vec![4, 8], vec![Ratio::Even, Ratio::Original]);
        let cells = expand_matrix(&c).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].cell, PromptCell::ZeroShot);
    }

    #[test]
    fn full_grid_counts() {
        let all = vec![Method::ZeroShot, Method::FewShot, Method::Cot, Method::Rag, Method::FineTune];
        let mut c = config(all, vec![4, 8], vec![Ratio::Even, Ratio::Original]);
        assert_eq!(expand_matrix(&c).unwrap().len(), 11);
        c.models[0].reasoning = true;
        let cells = expand_matrix(&c).unwrap();
        assert_eq!(cells.len(), 10);
        assert!(cells.iter().all(|j| j.cell != PromptCell::FineTuned));
    }

    #[test]
    fn empty_matrix() {
        let c = config(vec![Method::FewShot], vec![], vec![Ratio::Even]);
        assert!(matches!(expand_matrix(&c), Err(ConfigError::EmptyMatrix)));
        let mut c = config(vec![Method::FineTune], vec![], vec![]);
        c.models[0].reasoning = true;
        assert!(matches!(expand_matrix(&c), Err(ConfigError::EmptyMatrix)));
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let cell = PromptCell::FewShot {
            n_examples: 4,
            ratio: Ratio::Even,
        };
        assert_eq!(cell_seed(7, &cell, 0), cell_seed(7, &cell, 0));
        assert_ne!(cell_seed(7, &cell, 0), cell_seed(7, &cell, 1));
        assert_ne!(cell_seed(7, &cell, 0), cell_seed(8, &cell, 0));
        assert_ne!(cell_seed(7, &cell, 0), cell_seed(7, &PromptCell::ZeroShot, 0));
    }
}
