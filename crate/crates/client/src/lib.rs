//! Provider access for the metaphor-identification harness: chat completions
//! with retries and record/replay transcripts, fine-tuning splits, datasets
//! and jobs.

mod chat;
mod config;
mod error;
mod finetune;
mod split;
mod transcript;

pub use chat::{ChatClient, ChatRequest, ChatResponse, Mode, Usage};
pub use config::ProviderConfig;
pub use error::ClientError;
pub use finetune::{
    export_finetune_dataset, poll_finetune, submit_finetune, to_jsonl, wait_for_finetune, FineTuneJobHandle,
    FineTuneJobSpec, FineTuneManifest, FineTuneRecord, FineTuneStatus,
};
pub use split::{make_split, FineTuneSplit};
pub use transcript::{fingerprint, TranscriptEntry, TranscriptStore, MANIFEST_FILE};
