//! Shared helpers: fixture paths and a scripted chat-completions stub whose
//! answers depend only on the request, so recorded transcripts are reproducible.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use metaphor_client::Mode;
use metaphor_core::corpus::{serialize_spans, split_sentences, tokenize, AnnotatedDocument, Corpus, MetaphorType, Span};
use metaphor_core::promptgen::{PromptAssets, BEGIN_SENTINEL, END_SENTINEL};
use metaphor_core::text::char_slice;
use metaphor_orchestrator::ExperimentConfig;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const OPEN_MODEL: &str = "scripted-open";
pub const CLOSED_MODEL: &str = "scripted-closed";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn experiment_dir() -> PathBuf {
    fixtures().join("experiment")
}

pub fn gold_corpus() -> Corpus {
    Corpus::load_dir(fixtures().join("corpus")).unwrap()
}

/// The bundled fixture config, redirected to `output_dir`.
pub fn fixture_config(output_dir: &Path, mode: Mode, transcripts: Option<&Path>, base_url: Option<&str>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(experiment_dir().join("experiment.toml")).unwrap();
    cfg.output_dir = output_dir.to_path_buf();
    cfg.mode = mode;
    if let Some(t) = transcripts {
        cfg.transcripts_dir = Some(t.to_path_buf());
    }
    if let Some(url) = base_url {
        for m in &mut cfg.models {
            m.provider.base_url = url.to_string();
        }
    }
    cfg
}

/// Every file under `dir`, relative path to contents.
pub fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[derive(Clone)]
struct StubState {
    gold: Arc<Corpus>,
    cot_system: String,
    calls: Arc<AtomicUsize>,
    fail_doc: Arc<Mutex<Option<String>>>,
    jobs: Arc<AtomicUsize>,
    polls: Arc<AtomicUsize>,
}

pub struct Stub {
    pub base_url: String,
    pub calls: Arc<AtomicUsize>,
    /// Requests for this document get HTTP 503.
    pub fail_doc: Arc<Mutex<Option<String>>>,
    /// Fine-tuning jobs created.
    pub jobs: Arc<AtomicUsize>,
}

impl Stub {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

pub async fn start_stub() -> Stub {
    let state = StubState {
        gold: Arc::new(gold_corpus()),
        cot_system: PromptAssets::default().get("cot").unwrap().to_string(),
        calls: Arc::new(AtomicUsize::new(0)),
        fail_doc: Arc::new(Mutex::new(None)),
        jobs: Arc::new(AtomicUsize::new(0)),
        polls: Arc::new(AtomicUsize::new(0)),
    };
    let stub = Stub {
        base_url: String::new(),
        calls: state.calls.clone(),
        fail_doc: state.fail_doc.clone(),
        jobs: state.jobs.clone(),
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/files", post(upload))
        .route("/v1/fine_tuning/jobs", post(create_job))
        .route("/v1/fine_tuning/jobs/{id}", get(job_status))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Stub {
        base_url: format!("http://{addr}/v1"),
        ..stub
    }
}

async fn upload(_body: Bytes) -> Json<Value> {
    Json(json!({"id": "file-fixture", "purpose": "fine-tune"}))
}

async fn create_job(State(s): State<StubState>, Json(body): Json<Value>) -> Json<Value> {
    s.jobs.fetch_add(1, Ordering::SeqCst);
    Json(json!({"id": format!("ftjob-{}", body["model"].as_str().unwrap()), "status": "queued"}))
}

/// Every job reports `running` on its first poll and succeeds afterwards.
async fn job_status(State(s): State<StubState>, UrlPath(id): UrlPath<String>) -> Json<Value> {
    let base = id.trim_start_matches("ftjob-");
    if s.polls.fetch_add(1, Ordering::SeqCst) % 2 == 0 {
        Json(json!({"id": id, "status": "running", "fine_tuned_model": null}))
    } else {
        Json(json!({"id": id, "status": "succeeded", "fine_tuned_model": format!("ft:{base}:fixture")}))
    }
}

async fn chat(State(s): State<StubState>, Json(body): Json<Value>) -> impl IntoResponse {
    s.calls.fetch_add(1, Ordering::SeqCst);
    let model = body["model"].as_str().unwrap_or_default().to_string();
    let messages: Vec<(String, String)> = body["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| {
            (
                m["role"].as_str().unwrap().to_string(),
                m["content"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let last_user = &messages.last().unwrap().1;
    let doc = s
        .gold
        .documents()
        .iter()
        .find(|d| last_user.contains(d.text().trim_end()))
        .expect("request names a fixture document");
    if s.fail_doc.lock().unwrap().as_deref() == Some(doc.id()) {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": {"message": "overloaded"}})));
    }
    let strategy = if messages[0].1 == s.cot_system {
        "cot"
    } else if messages.len() > 2 {
        "few_shot"
    } else {
        "zero_shot"
    };
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    for (role, content) in &messages {
        hasher.update(role.as_bytes());
        hasher.update(content.as_bytes());
    }
    let h = u64::from_le_bytes(hasher.finalize()[..8].try_into().unwrap());
    let content = scripted_response(&model, strategy, doc, h);
    let usage = json!({
        "prompt_tokens": messages.iter().map(|m| m.1.len() as u64 / 4).sum::<u64>(),
        "completion_tokens": content.len() as u64 / 4,
    });
    (
        StatusCode::OK,
        Json(json!({
            "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            "usage": usage,
        })),
    )
}

fn explanations(text: &str, spans: &[Span]) -> String {
    spans
        .iter()
        .map(|s| format!("\"{}\" is used metaphorically here.", char_slice(text, s.start, s.end)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The scripted behaviour of the two fixture models.
///
/// * fine-tuned (`ft:` prefix): echoes the gold annotation exactly.
/// * open: echoes the text faithfully but misses one gold span, chosen by the request hash.
/// * closed: tags only conventional spans, adds one false positive, prefixes a
///   preamble and sometimes writes a non-canonical tag. It refuses CoT
///   requests for review_04 and drops the last sentence of review_02 in
///   few-shot answers.
pub fn scripted_response(model: &str, strategy: &str, doc: &AnnotatedDocument, h: u64) -> String {
    let text = doc.text();
    let mut spans: Vec<Span> = doc.spans.clone();
    let mut echoed = text.to_string();
    let preamble;
    if model.starts_with("ft:") {
        return serialize_spans(text, &spans, false);
    } else if model == OPEN_MODEL {
        if !spans.is_empty() {
            spans.remove((h % spans.len() as u64) as usize);
        }
        preamble = "";
    } else {
        if strategy == "cot" && doc.id() == "review_04" {
            return "I'm sorry, but I can't help with annotating this review.".into();
        }
        spans.retain(|s| s.metaphor_type == MetaphorType::Conventional);
        let candidates: Vec<_> = tokenize(text)
            .into_iter()
            .filter(|t| t.surface.chars().count() >= 5 && t.surface.chars().all(char::is_alphabetic))
            .filter(|t| !doc.spans.iter().any(|s| s.overlaps(t.start, t.end)))
            .collect();
        let fp = &candidates[(h % candidates.len() as u64) as usize];
        spans.push(Span::new(fp.start, fp.end, MetaphorType::Unlabelled));
        spans.sort_by_key(|s| s.start);
        if strategy == "few_shot" && doc.id() == "review_02" {
            let cut = split_sentences(text).last().unwrap().start;
            spans.retain(|s| s.end <= cut);
            echoed = char_slice(text, 0, cut).trim_end().to_string();
        }
        preamble = "Here is the annotated text:\n\n";
    }
    let mut tagged = serialize_spans(&echoed, &spans, false);
    if model == CLOSED_MODEL && h % 2 == 1 {
        tagged = tagged.replacen("<Metaphor>", "<metaphor >", 1);
    }
    if strategy == "cot" {
        format!(
            "{}\n\n{BEGIN_SENTINEL}\n{}\n{END_SENTINEL}",
            explanations(&echoed, &spans),
            tagged.trim_end()
        )
    } else {
        format!("{preamble}{tagged}")
    }
}

/// A fresh output directory holding a replayed run of the fixture experiment.
pub async fn replayed_output() -> tempfile::TempDir {
    let out = tempfile::tempdir().unwrap();
    metaphor_orchestrator::run_experiment(fixture_config(out.path(), Mode::Replay, None, None))
        .await
        .unwrap();
    out
}
