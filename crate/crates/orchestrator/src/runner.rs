//! Experiment execution: build every prompt, obtain responses, score them and
//! append one record per (model, cell, document, repetition).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use futures::StreamExt;
use metaphor_client::{
    export_finetune_dataset, fingerprint, make_split, submit_finetune, to_jsonl, wait_for_finetune, ChatClient,
    ChatRequest, FineTuneJobHandle, FineTuneJobSpec, FineTuneSplit, FineTuneStatus, Mode, TranscriptStore,
};
use metaphor_core::corpus::{extract_examples, AnnotatedDocument, Corpus, ExampleSentence};
use metaphor_core::evaluator::{evaluate_response, EvalSettings, Failure, FailureKind};
use metaphor_core::promptgen::{Codebook, Explanations, PromptAssets, PromptBundle, PromptCell, PromptContext};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, ModelSpec};
use crate::matrix::{cell_seed, expand_matrix, JobCell};
use crate::records::{load_records, Outcome, RecordKey, RecordWriter, RunRecord, RECORDS_FILE};
use crate::report::{generate_report, write_report, ReportBundle};

/// Snapshot of the gold corpus inside the output directory.
pub const GOLD_DIR: &str = "gold";
pub const FINETUNE_DIR: &str = "finetune";
const JOB_FILE: &str = "job.json";

/// Everything loaded from disk that prompts and scoring depend on.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub corpus: Corpus,
    pub pool: Vec<ExampleSentence>,
    pub explanations: Explanations,
    pub codebook: Option<Codebook>,
    pub assets: PromptAssets,
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> anyhow::Result<Self> {
        let corpus = Corpus::load_dir(&config.corpus_path)
            .with_context(|| format!("loading corpus {}", config.corpus_path.display()))?;
        let needs_types = config.methods.iter().any(|m| matches!(m, Method::FewShot | Method::Cot));
        let pool = extract_examples(corpus.documents(), needs_types)?;
        let explanations = match &config.explanations_path {
            Some(p) => Explanations::load(p)?,
            None => Explanations::default(),
        };
        let codebook = config.codebook_path.as_ref().map(Codebook::load).transpose()?;
        let assets = match &config.prompts_dir {
            Some(dir) => PromptAssets::load_dir(dir)?,
            None => PromptAssets::default(),
        };
        Ok(Self {
            config,
            corpus,
            pool,
            explanations,
            codebook,
            assets,
        })
    }

    pub fn context(&self) -> PromptContext<'_> {
        PromptContext {
            pool: &self.pool,
            explanations: &self.explanations,
            codebook: self.codebook.as_ref(),
            assets: &self.assets,
        }
    }

    pub fn settings(&self) -> EvalSettings {
        EvalSettings {
            candidate_floor: self.config.candidate_floor,
            fidelity_floor: self.config.fidelity_floor,
        }
    }

    /// Seed used to sample examples for a repetition.
    pub fn sampling_seed(&self, cell: &PromptCell, repetition: u32) -> u64 {
        let r = if self.config.resample_examples { repetition } else { 0 };
        cell_seed(self.config.seed, cell, r)
    }

    /// Train/test split for repetition `repetition` of the fine-tune cell.
    pub fn finetune_split(&self, repetition: u32) -> anyhow::Result<FineTuneSplit> {
        let seed = cell_seed(self.config.seed, &PromptCell::FineTuned, repetition);
        Ok(make_split(&self.corpus.ids(), self.config.split_fraction, seed)?)
    }

    /// Documents scored in a cell: all of them, or the held-out part for fine-tuning.
    pub fn scored_doc_ids(&self, cell: &PromptCell, repetition: u32) -> anyhow::Result<Vec<String>> {
        Ok(match cell {
            PromptCell::FineTuned => self.finetune_split(repetition)?.test_doc_ids.into_iter().collect(),
            _ => self.corpus.ids(),
        })
    }

    fn model(&self, name: &str) -> &ModelSpec {
        self.config.model(name).expect("cells only name configured models")
    }
}

/// What the fine-tune stage recorded for one (model, repetition).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FineTuneJobRecord {
    pub handle: Option<FineTuneJobHandle>,
    pub status: Option<FineTuneStatus>,
}

impl FineTuneJobRecord {
    pub fn fine_tuned_model(&self) -> Option<&str> {
        self.status
            .as_ref()
            .filter(|s| s.status == "succeeded")
            .and_then(|s| s.fine_tuned_model.as_deref())
    }
}

pub fn finetune_dir(output_dir: &Path, model: &str, repetition: u32) -> PathBuf {
    output_dir.join(FINETUNE_DIR).join(model).join(format!("rep{repetition}"))
}

/// Copy of a finished job kept with the transcripts so replay can find it.
pub fn recorded_job_path(transcripts_dir: &Path, model: &str, repetition: u32) -> PathBuf {
    transcripts_dir.join(FINETUNE_DIR).join(format!("{model}__rep{repetition}.json"))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, body).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Write the training set for one repetition and return the fine-tuned model
/// name, reusing a recorded job when there is one.
async fn prepare_finetune(exp: &Experiment, model: &ModelSpec, repetition: u32) -> anyhow::Result<String> {
    let cfg = &exp.config;
    let dir = finetune_dir(&cfg.output_dir, &model.name, repetition);
    std::fs::create_dir_all(&dir)?;
    let split = exp.finetune_split(repetition)?;
    let system_prompt = exp.assets.get("fine_tune")?;
    let (records, manifest) = export_finetune_dataset(exp.corpus.documents(), &split, system_prompt)?;
    let training_jsonl = to_jsonl(&records);
    std::fs::write(dir.join("train.jsonl"), &training_jsonl)?;
    write_json(&dir.join("manifest.json"), &manifest)?;

    let job_path = dir.join(JOB_FILE);
    let mut job: FineTuneJobRecord = if job_path.is_file() {
        serde_json::from_str(&std::fs::read_to_string(&job_path)?)
            .with_context(|| format!("reading {}", job_path.display()))?
    } else {
        FineTuneJobRecord::default()
    };
    if let Some(name) = job.fine_tuned_model() {
        return Ok(name.to_string());
    }
    let recorded_path = recorded_job_path(&cfg.transcripts_dir(), &model.name, repetition);
    if cfg.mode != Mode::Live && recorded_path.is_file() {
        let recorded: FineTuneJobRecord = serde_json::from_str(&std::fs::read_to_string(&recorded_path)?)
            .with_context(|| format!("reading {}", recorded_path.display()))?;
        if let Some(name) = recorded.fine_tuned_model() {
            let name = name.to_string();
            write_json(&job_path, &recorded)?;
            return Ok(name);
        }
    }

    if cfg.mode == Mode::Replay {
        bail!(
            "no recorded fine-tuned model in {} or {}",
            job_path.display(),
            recorded_path.display()
        );
    }
    let handle = match job.handle.clone() {
        Some(h) => h,
        None => {
            let h = submit_finetune(
                &model.provider,
                &FineTuneJobSpec {
                    base_model: model.provider.model_name.clone(),
                    reasoning: model.reasoning,
                    training_jsonl,
                    suffix: None,
                    hyperparameters: None,
                },
            )
            .await?;
            job.handle = Some(h.clone());
            write_json(&job_path, &job)?;
            h
        }
    };
    let status = wait_for_finetune(
        &model.provider,
        &handle,
        Duration::from_secs(cfg.finetune_poll_secs),
        Duration::from_secs(cfg.finetune_timeout_secs),
    )
    .await?;
    job.status = Some(status.clone());
    write_json(&job_path, &job)?;
    if cfg.mode == Mode::Record && job.fine_tuned_model().is_some() {
        std::fs::create_dir_all(recorded_path.parent().expect("has a parent"))?;
        write_json(&recorded_path, &job)?;
    }
    job.fine_tuned_model().map(str::to_string).ok_or_else(|| {
        anyhow::anyhow!(
            "fine-tuning job {} ended with status {}: {}",
            status.job_id,
            status.status,
            status.error.unwrap_or_default()
        )
    })
}

struct Job {
    model: String,
    cell: PromptCell,
    repetition: u32,
    gold: Arc<AnnotatedDocument>,
    bundle: PromptBundle,
    client: ChatClient,
    fine_tuned_model: Option<String>,
}

fn failed(job_model: &str, cell: PromptCell, doc_id: &str, repetition: u32, failure: Failure) -> RunRecord {
    RunRecord {
        model: job_model.to_string(),
        cell,
        doc_id: doc_id.to_string(),
        repetition,
        fingerprint: String::new(),
        raw_response: None,
        sanitized: None,
        fidelity: failure.fidelity,
        pred_labels: None,
        example_sources: Vec::new(),
        fine_tuned_model: None,
        outcome: Outcome::Failed { failure },
    }
}

async fn execute(job: Job, temperature: Option<f64>, settings: EvalSettings) -> RunRecord {
    let request = ChatRequest {
        messages: job.bundle.messages.clone(),
        model_name: job.client.config().model_name.clone(),
        temperature,
        repetition: job.repetition,
    };
    let fp = fingerprint(&request);
    let mut record = failed(
        &job.model,
        job.cell,
        job.gold.id(),
        job.repetition,
        Failure {
            kind: FailureKind::Transport,
            message: String::new(),
            fidelity: None,
        },
    );
    record.fingerprint = fp;
    record.example_sources = job.bundle.example_sources.clone();
    record.fine_tuned_model = job.fine_tuned_model.clone();
    let response = match job.client.complete(&request).await {
        Ok(r) => r,
        Err(e) => {
            if let Outcome::Failed { failure } = &mut record.outcome {
                failure.message = e.to_string();
            }
            return record;
        }
    };
    match evaluate_response(
        &response.content,
        &job.gold,
        job.bundle.expects_explanations,
        &job.bundle.example_sources,
        &settings,
    ) {
        Ok(scored) => {
            record.fidelity = Some(scored.score.fidelity);
            record.sanitized = Some(scored.sanitized);
            record.pred_labels = Some(scored.pred_labels);
            record.outcome = Outcome::Scored { score: scored.score };
        }
        Err(failure) => {
            record.fidelity = failure.fidelity;
            record.outcome = Outcome::Failed { failure };
        }
    }
    record.raw_response = Some(response.content);
    record
}

/// Whether a stored record still needs to be produced. Transport failures are
/// retried on restart; everything else is final.
fn is_complete(r: &RunRecord) -> bool {
    !matches!(r.failure(), Some(f) if f.kind == FailureKind::Transport)
}

/// Write the gold snapshot, or check that an existing one matches the corpus.
fn snapshot_gold(exp: &Experiment) -> anyhow::Result<()> {
    let dir = exp.config.output_dir.join(GOLD_DIR);
    if dir.is_dir() {
        let existing = Corpus::load_dir(&dir)?;
        if existing.documents() != exp.corpus.documents() {
            bail!(
                "{} holds a different gold corpus; use a fresh output_dir",
                dir.display()
            );
        }
        return Ok(());
    }
    exp.corpus.write_dir(&dir)?;
    Ok(())
}

/// Run every pending record of the experiment, then regenerate the report.
///
/// Completed records are skipped, so an interrupted run can simply be started
/// again. Per-record failures are recorded; only config, corpus and prompt
/// errors abort.
pub async fn run_experiment(config: ExperimentConfig) -> anyhow::Result<ReportBundle> {
    let exp = Experiment::load(config)?;
    let cfg = &exp.config;
    let cells = expand_matrix(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    snapshot_gold(&exp)?;

    let store = match cfg.mode {
        Mode::Live => None,
        _ => Some(Arc::new(TranscriptStore::open(cfg.transcripts_dir())?)),
    };
    let mut clients = BTreeMap::new();
    for m in &cfg.models {
        clients.insert(m.name.clone(), ChatClient::new(m.provider.clone(), cfg.mode, store.clone())?);
    }

    let records_path = cfg.output_dir.join(RECORDS_FILE);
    let done: BTreeSet<RecordKey> = load_records(&records_path)?
        .into_iter()
        .filter(is_complete)
        .map(|r| r.key())
        .collect();
    let mut writer = RecordWriter::open(&records_path)?;

    let ctx = exp.context();
    let mut jobs = Vec::new();
    for jc in &cells {
        for repetition in 0..cfg.repetitions {
            let pending: Vec<String> = exp
                .scored_doc_ids(&jc.cell, repetition)?
                .into_iter()
                .filter(|doc_id| {
                    !done.contains(&RecordKey {
                        model: jc.model.clone(),
                        cell: jc.cell.key(),
                        repetition,
                        doc_id: doc_id.clone(),
                    })
                })
                .collect();
            if pending.is_empty() {
                continue;
            }
            let mut client = clients[&jc.model].clone();
            let mut fine_tuned_model = None;
            if jc.cell == PromptCell::FineTuned {
                match prepare_finetune(&exp, exp.model(&jc.model), repetition).await {
                    Ok(name) => {
                        client = client.with_model(&name);
                        fine_tuned_model = Some(name);
                    }
                    Err(e) => {
                        log::error!("{} rep {repetition}: {e:#}", jc.key());
                        for doc_id in &pending {
                            let failure = Failure {
                                kind: FailureKind::Transport,
                                message: format!("fine-tuning unavailable: {e:#}"),
                                fidelity: None,
                            };
                            writer.append(&failed(&jc.model, jc.cell, doc_id, repetition, failure))?;
                        }
                        continue;
                    }
                }
            }
            let examples = ctx
                .sample(&jc.cell, exp.sampling_seed(&jc.cell, repetition))
                .with_context(|| format!("sampling examples for {}", jc.key()))?;
            for doc_id in pending {
                let gold = exp.corpus.get(&doc_id).expect("ids come from the corpus");
                let bundle = ctx
                    .build(&jc.cell, &gold.doc, &examples)
                    .with_context(|| format!("building the {} prompt for {doc_id}", jc.cell))?;
                jobs.push(Job {
                    model: jc.model.clone(),
                    cell: jc.cell,
                    repetition,
                    gold: Arc::new(gold.clone()),
                    bundle,
                    client: client.clone(),
                    fine_tuned_model: fine_tuned_model.clone(),
                });
            }
        }
    }

    let width: usize = cfg.models.iter().map(|m| m.provider.max_parallel).sum();
    log::info!("{} request(s) pending, {} already complete", jobs.len(), done.len());
    let (temperature, settings) = (cfg.temperature, exp.settings());
    let mut results = futures::stream::iter(jobs)
        .map(|job| execute(job, temperature, settings))
        .buffer_unordered(width.max(1));
    while let Some(record) = results.next().await {
        if let Some(f) = record.failure() {
            log::warn!("{} {}: {:?} failure: {}", record.run_id(), record.doc_id, f.kind, f.message);
        }
        writer.append(&record)?;
    }

    let records = load_records(&records_path)?;
    let bundle = generate_report(&exp, &records)?;
    write_report(&cfg.output_dir, &bundle)?;
    Ok(bundle)
}

/// Rebuild the report from stored records without sending anything.
pub fn report_only(config: ExperimentConfig) -> anyhow::Result<ReportBundle> {
    let exp = Experiment::load(config)?;
    let records = load_records(&exp.config.output_dir.join(RECORDS_FILE))?;
    let bundle = generate_report(&exp, &records)?;
    write_report(&exp.config.output_dir, &bundle)?;
    Ok(bundle)
}

/// Expected record keys for the configured matrix.
pub fn expected_keys(exp: &Experiment, cells: &[JobCell]) -> anyhow::Result<BTreeSet<RecordKey>> {
    let mut keys = BTreeSet::new();
    for jc in cells {
        for repetition in 0..exp.config.repetitions {
            for doc_id in exp.scored_doc_ids(&jc.cell, repetition)? {
                keys.insert(RecordKey {
                    model: jc.model.clone(),
                    cell: jc.cell.key(),
                    repetition,
                    doc_id,
                });
            }
        }
    }
    Ok(keys)
}
