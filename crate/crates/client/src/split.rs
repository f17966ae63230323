//! Train/test document splits for fine-tuning.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ClientError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneSplit {
    pub seed: u64,
    pub fraction: f64,
    pub train_doc_ids: BTreeSet<String>,
    pub test_doc_ids: BTreeSet<String>,
}

/// Shuffle the sorted, de-duplicated ids with a seeded ChaCha8 generator and
/// take the first `round(fraction * N)` (halves round up) for training.
pub fn make_split(corpus_ids: &[String], fraction: f64, seed: u64) -> Result<FineTuneSplit, ClientError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ClientError::InvalidConfig(format!("split fraction {fraction} not in (0, 1)")));
    }
    let mut ids: Vec<String> = corpus_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n_train = (fraction * ids.len() as f64 + 0.5).floor() as usize;
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ids.split_off(n_train);
    Ok(FineTuneSplit {
        seed,
        fraction,
        train_doc_ids: ids.into_iter().collect(),
        test_doc_ids: test.into_iter().collect(),
    })
}
