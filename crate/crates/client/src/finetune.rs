//! Fine-tuning datasets and provider fine-tuning jobs.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use metaphor_core::corpus::{serialize_inline, AnnotatedDocument};
use metaphor_core::promptgen::{Message, Role};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chat::provider_message;
use crate::config::ProviderConfig;
use crate::error::ClientError;
use crate::split::FineTuneSplit;

/// One training example: system prompt, untagged text, gold tagged text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneManifest {
    pub seed: u64,
    pub fraction: f64,
    pub train_doc_ids: BTreeSet<String>,
    pub test_doc_ids: BTreeSet<String>,
    pub n_records: usize,
    pub system_prompt_sha256: String,
    /// Hyperparameters are left to the provider unless set here.
    #[serde(default)]
    pub hyperparameters: Option<serde_json::Value>,
}

pub fn export_finetune_dataset(
    corpus: &[AnnotatedDocument],
    split: &FineTuneSplit,
    system_prompt: &str,
) -> Result<(Vec<FineTuneRecord>, FineTuneManifest), ClientError> {
    let mut records = Vec::with_capacity(split.train_doc_ids.len());
    for id in &split.train_doc_ids {
        let doc = corpus
            .iter()
            .find(|d| d.id() == id)
            .ok_or_else(|| ClientError::Precondition(format!("training document {id} not in corpus")))?;
        records.push(FineTuneRecord {
            messages: vec![
                Message::new(Role::System, system_prompt),
                Message::new(Role::User, doc.text()),
                Message::new(Role::Assistant, serialize_inline(doc, false)),
            ],
        });
    }
    let manifest = FineTuneManifest {
        seed: split.seed,
        fraction: split.fraction,
        train_doc_ids: split.train_doc_ids.clone(),
        test_doc_ids: split.test_doc_ids.clone(),
        n_records: records.len(),
        system_prompt_sha256: hex::encode(Sha256::digest(system_prompt.as_bytes())),
        hyperparameters: None,
    };
    Ok((records, manifest))
}

/// One JSON object per line, newline-terminated.
pub fn to_jsonl(records: &[FineTuneRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneJobSpec {
    pub base_model: String,
    /// Reasoning models are not fine-tuned.
    pub reasoning: bool,
    pub training_jsonl: String,
    #[serde(default)]
    pub suffix: Option<String>,
    #[serde(default)]
    pub hyperparameters: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneJobHandle {
    pub job_id: String,
    pub training_file_id: String,
    pub base_model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneStatus {
    pub job_id: String,
    pub status: String,
    pub fine_tuned_model: Option<String>,
    pub error: Option<String>,
}

impl FineTuneStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self.status.as_str(), "succeeded" | "failed" | "cancelled")
    }
}

#[derive(Deserialize)]
struct IdBody {
    id: String,
}

#[derive(Deserialize)]
struct JobBody {
    id: String,
    status: String,
    #[serde(default)]
    fine_tuned_model: Option<String>,
    #[serde(default)]
    error: Option<serde_json::Value>,
}

fn http(config: &ProviderConfig) -> Result<(reqwest::Client, Option<String>), ClientError> {
    let client = reqwest::Client::builder()
        .timeout(config.timeout())
        .build()
        .map_err(|e| ClientError::Transport(e.to_string()))?;
    Ok((client, config.api_key()?))
}

async fn send<T: for<'de> Deserialize<'de>>(
    builder: reqwest::RequestBuilder,
    key: &Option<String>,
) -> Result<T, ClientError> {
    let builder = match key {
        Some(k) => builder.bearer_auth(k),
        None => builder,
    };
    let resp = builder.send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
    let status = resp.status();
    let text = resp.text().await.map_err(|e| ClientError::Transport(e.to_string()))?;
    if status.as_u16() == 401 || status.as_u16() == 403 {
        return Err(ClientError::AuthError {
            status: status.as_u16(),
            message: provider_message(&text),
        });
    }
    if !status.is_success() {
        return Err(ClientError::ProviderRejected {
            status: status.as_u16(),
            message: provider_message(&text),
        });
    }
    serde_json::from_str(&text).map_err(|e| ClientError::InvalidResponse(format!("{e}: {text}")))
}

/// Upload the training file and create a job.
pub async fn submit_finetune(config: &ProviderConfig, request: &FineTuneJobSpec) -> Result<FineTuneJobHandle, ClientError> {
    if request.reasoning {
        return Err(ClientError::Precondition(format!(
            "{} is a reasoning model; fine-tuning is not supported",
            request.base_model
        )));
    }
    let (client, key) = http(config)?;
    let part = reqwest::multipart::Part::bytes(request.training_jsonl.clone().into_bytes())
        .file_name("train.jsonl")
        .mime_str("application/jsonl")
        .map_err(|e| ClientError::Transport(e.to_string()))?;
    let form = reqwest::multipart::Form::new().text("purpose", "fine-tune").part("file", part);
    let file: IdBody = send(client.post(config.endpoint("files")).multipart(form), &key).await?;

    let mut body = serde_json::json!({ "model": request.base_model, "training_file": file.id });
    if let Some(s) = &request.suffix {
        body["suffix"] = s.clone().into();
    }
    if let Some(h) = &request.hyperparameters {
        body["hyperparameters"] = h.clone();
    }
    let job: JobBody = send(client.post(config.endpoint("fine_tuning/jobs")).json(&body), &key).await?;
    Ok(FineTuneJobHandle {
        job_id: job.id,
        training_file_id: file.id,
        base_model: request.base_model.clone(),
    })
}

pub async fn poll_finetune(config: &ProviderConfig, handle: &FineTuneJobHandle) -> Result<FineTuneStatus, ClientError> {
    let (client, key) = http(config)?;
    let job: JobBody = send(
        client.get(config.endpoint(&format!("fine_tuning/jobs/{}", handle.job_id))),
        &key,
    )
    .await?;
    Ok(FineTuneStatus {
        job_id: job.id,
        status: job.status,
        fine_tuned_model: job.fine_tuned_model,
        error: job.error.filter(|e| !e.is_null()).map(|e| {
            e.get("message").and_then(|m| m.as_str()).map_or_else(|| e.to_string(), str::to_string)
        }),
    })
}

/// Poll until the job reaches a terminal status.
pub async fn wait_for_finetune(
    config: &ProviderConfig,
    handle: &FineTuneJobHandle,
    interval: Duration,
    timeout: Duration,
) -> Result<FineTuneStatus, ClientError> {
    let started = Instant::now();
    loop {
        let status = poll_finetune(config, handle).await?;
        if status.is_terminal() {
            return Ok(status);
        }
        if started.elapsed() >= timeout {
            return Err(ClientError::Timeout {
                what: format!("fine-tuning job {}", handle.job_id),
                waited_secs: started.elapsed().as_secs(),
            });
        }
        tokio::time::sleep(interval).await;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::make_split;
    use metaphor_core::corpus::{parse_inline, parse_inline_text};

    #[test]
    fn records_round_trip_gold() {
        let corpus = vec![
            parse_inline("a", "A <Metaphor type=\"creative\">storm</Metaphor> of a film.").unwrap(),
            parse_inline("b", "Plain text.").unwrap(),
            parse_inline("c", "It <Metaphor>sank</Metaphor>.").unwrap(),
        ];
        let ids: Vec<String> = corpus.iter().map(|d| d.id().to_string()).collect();
        let split = make_split(&ids, 0.5, 3).unwrap();
        let (records, manifest) = export_finetune_dataset(&corpus, &split, "sys").unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(manifest.n_records, 2);
        for r in &records {
            assert_eq!(r.messages.len(), 3);
            let (stripped, _) = parse_inline_text(&r.messages[2].content).unwrap();
            assert_eq!(stripped, r.messages[1].content);
            assert!(!r.messages[2].content.contains("type="));
        }
        assert_eq!(to_jsonl(&records).lines().count(), 2);
    }

    #[test]
    fn unknown_train_id_rejected() {
        let split = FineTuneSplit {
            seed: 0,
            fraction: 0.5,
            train_doc_ids: ["zzz".to_string()].into(),
            test_doc_ids: BTreeSet::new(),
        };
        assert!(matches!(
            export_finetune_dataset(&[], &split, "s"),
            Err(ClientError::Precondition(_))
        ));
    }
}
