//! HTTP review service for adjudicating discrepancies.
//!
//! Every adjudication is appended to `review/<run>.log.jsonl` and synced
//! before the response is sent. Export compacts the log into
//! `review/<run>.state.json` and writes the corrected corpus to
//! `corrected/<run>/`.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use metaphor_core::corpus::{Corpus, MetaphorType, Span};
use metaphor_core::evaluator::{example_mask, Adjudication, Discrepancy, TaxonomyEntry};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use crate::error::{ExportError, ReviewError};
use crate::export_corrected::{export_corrected_corpus, ExportTally};
use crate::records::{load_records, RECORDS_FILE};
use crate::report::{DiscrepancyReport, DISCREPANCY_DIR, REPORT_DIR};
use crate::runner::GOLD_DIR;

pub const REVIEW_DIR: &str = "review";
pub const CORRECTED_DIR: &str = "corrected";
pub const DEFAULT_CONTEXT_WIDTH: usize = 5;

/// One persisted decision. `doc_id` and `token_range` pin the entry to the
/// discrepancy it was made for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationEntry {
    pub index: usize,
    pub doc_id: String,
    pub token_range: (usize, usize),
    pub decision: Adjudication,
    pub taxonomy_labels: Vec<String>,
    pub edited_span: Option<Span>,
    pub revision: u64,
}

impl AdjudicationEntry {
    fn of(index: usize, d: &Discrepancy) -> Self {
        Self {
            index,
            doc_id: d.doc_id.clone(),
            token_range: d.token_range,
            decision: d.adjudication,
            taxonomy_labels: d.taxonomy_labels.clone(),
            edited_span: d.edited_span,
            revision: d.revision,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReviewOptions {
    /// Built review UI assets, served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Taxonomy vocabulary; the built-in categories when `None`.
    pub taxonomy: Option<Vec<TaxonomyEntry>>,
}

#[derive(Debug)]
struct RunState {
    report: DiscrepancyReport,
    log: File,
    log_path: PathBuf,
    state_path: PathBuf,
    /// Predicted labels and example mask per document, when records are available.
    labels: BTreeMap<String, (Vec<bool>, Vec<bool>)>,
}

#[derive(Debug)]
pub struct ReviewState {
    output_dir: PathBuf,
    gold: Corpus,
    taxonomy: Vec<TaxonomyEntry>,
    runs: BTreeMap<String, Mutex<RunState>>,
}

fn corrupt(path: &Path, message: impl std::fmt::Display) -> ReviewError {
    ReviewError::CorruptReport {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn apply_entry(report: &mut DiscrepancyReport, e: AdjudicationEntry, path: &Path) -> Result<(), ReviewError> {
    let d = report
        .discrepancies
        .get_mut(e.index)
        .ok_or_else(|| corrupt(path, format!("entry for discrepancy {} which does not exist", e.index)))?;
    if d.doc_id != e.doc_id || d.token_range != e.token_range {
        return Err(corrupt(
            path,
            format!("entry {} no longer matches the discrepancy report", e.index),
        ));
    }
    d.adjudication = e.decision;
    d.taxonomy_labels = e.taxonomy_labels;
    d.edited_span = e.edited_span;
    d.revision = e.revision;
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

impl ReviewState {
    /// Load discrepancy reports and replay stored adjudications.
    pub fn load(output_dir: impl AsRef<Path>, options: &ReviewOptions) -> Result<Self, ReviewError> {
        let output_dir = output_dir.as_ref().to_path_buf();
        let gold_dir = output_dir.join(GOLD_DIR);
        let gold = Corpus::load_dir(&gold_dir).map_err(|e| corrupt(&gold_dir, e))?;
        let review_dir = output_dir.join(REVIEW_DIR);
        std::fs::create_dir_all(&review_dir)?;

        let records = load_records(&output_dir.join(RECORDS_FILE)).unwrap_or_else(|e| {
            log::warn!("run records unavailable: {e:#}");
            Vec::new()
        });
        let mut labels: BTreeMap<String, BTreeMap<String, (Vec<bool>, Vec<bool>)>> = BTreeMap::new();
        for r in records {
            let (Some(pred), Some(doc)) = (r.pred_labels.clone(), gold.get(&r.doc_id)) else {
                continue;
            };
            let mask = example_mask(doc.id(), &doc.tokens(), &r.example_sources);
            labels.entry(r.run_id()).or_default().insert(r.doc_id.clone(), (pred, mask));
        }

        let disc_dir = output_dir.join(REPORT_DIR).join(DISCREPANCY_DIR);
        let mut paths: Vec<PathBuf> = match std::fs::read_dir(&disc_dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect(),
            Err(e) => return Err(corrupt(&disc_dir, e)),
        };
        paths.sort();

        let mut runs = BTreeMap::new();
        for path in paths {
            let raw = std::fs::read_to_string(&path)?;
            let mut report: DiscrepancyReport = serde_json::from_str(&raw).map_err(|e| corrupt(&path, e))?;
            for d in &report.discrepancies {
                let doc = gold
                    .get(&d.doc_id)
                    .ok_or_else(|| corrupt(&path, format!("unknown document {}", d.doc_id)))?;
                let n = doc.tokens().len();
                if d.token_range.0 >= d.token_range.1 || d.token_range.1 > n {
                    return Err(corrupt(&path, format!("token range {:?} out of range", d.token_range)));
                }
            }
            let run_id = report.run_id.clone();
            let state_path = review_dir.join(format!("{run_id}.state.json"));
            if state_path.is_file() {
                let entries: Vec<AdjudicationEntry> =
                    serde_json::from_str(&std::fs::read_to_string(&state_path)?).map_err(|e| corrupt(&state_path, e))?;
                for e in entries {
                    apply_entry(&mut report, e, &state_path)?;
                }
            }
            let log_path = review_dir.join(format!("{run_id}.log.jsonl"));
            if log_path.is_file() {
                let raw = std::fs::read_to_string(&log_path)?;
                // a torn final line is a write that was never acknowledged
                let complete = raw.rfind('\n').map_or("", |i| &raw[..=i]);
                if complete.len() != raw.len() {
                    OpenOptions::new().write(true).open(&log_path)?.set_len(complete.len() as u64)?;
                }
                for line in complete.lines().filter(|l| !l.trim().is_empty()) {
                    let e: AdjudicationEntry = serde_json::from_str(line).map_err(|e| corrupt(&log_path, e))?;
                    apply_entry(&mut report, e, &log_path)?;
                }
            }
            let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
            runs.insert(
                run_id.clone(),
                Mutex::new(RunState {
                    labels: labels.remove(&run_id).unwrap_or_default(),
                    report,
                    log,
                    log_path,
                    state_path,
                }),
            );
        }
        Ok(Self {
            output_dir,
            gold,
            taxonomy: options
                .taxonomy
                .clone()
                .unwrap_or_else(metaphor_core::evaluator::default_taxonomy),
            runs,
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    current: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            current: None,
        }
    }
    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }
    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = serde_json::json!({ "error": self.message });
        if let Some(c) = self.current {
            body["current"] = c;
        }
        (self.status, Json(body)).into_response()
    }
}

type Shared = Arc<ReviewState>;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub model: String,
    pub cell: String,
    pub repetition: u32,
    pub total: usize,
    pub open: usize,
    pub adjudicated: usize,
}

async fn list_runs(State(s): State<Shared>) -> Json<Vec<RunSummary>> {
    let mut out = Vec::new();
    for (id, run) in &s.runs {
        let run = run.lock().await;
        let r = &run.report;
        let open = r
            .discrepancies
            .iter()
            .filter(|d| d.adjudication == Adjudication::Open)
            .count();
        out.push(RunSummary {
            run_id: id.clone(),
            model: r.model.clone(),
            cell: r.cell.clone(),
            repetition: r.repetition,
            total: r.discrepancies.len(),
            open,
            adjudicated: r.discrepancies.len() - open,
        });
    }
    Json(out)
}

/// A discrepancy with its position in the run's report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewItem {
    pub index: usize,
    #[serde(flatten)]
    pub discrepancy: Discrepancy,
}

#[derive(Debug, Deserialize)]
struct StateFilter {
    state: Option<String>,
}

fn matches_state(d: &Discrepancy, state: &str) -> Result<bool, ApiError> {
    Ok(match state {
        "all" => true,
        "open" => d.adjudication == Adjudication::Open,
        "adjudicated" => d.adjudication != Adjudication::Open,
        "keep_gold" => d.adjudication == Adjudication::KeepGold,
        "accept_model" => d.adjudication == Adjudication::AcceptModel,
        "edited" => d.adjudication == Adjudication::Edited,
        other => return Err(ApiError::bad_request(format!("unknown state filter {other:?}"))),
    })
}

fn run<'a>(s: &'a ReviewState, id: &str) -> Result<&'a Mutex<RunState>, ApiError> {
    s.runs.get(id).ok_or_else(|| ApiError::not_found(format!("no run {id}")))
}

async fn list_discrepancies(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<StateFilter>,
) -> Result<Json<Vec<ReviewItem>>, ApiError> {
    let run = run(&s, &id)?.lock().await;
    let state = q.state.as_deref().unwrap_or("all");
    let mut out = Vec::new();
    for (index, d) in run.report.discrepancies.iter().enumerate() {
        if matches_state(d, state)? {
            out.push(ReviewItem {
                index,
                discrepancy: d.clone(),
            });
        }
    }
    Ok(Json(out))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EditedSpanBody {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub metaphor_type: Option<MetaphorType>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjudicateRequest {
    pub decision: Adjudication,
    #[serde(default)]
    pub taxonomy_label: Option<String>,
    #[serde(default)]
    pub taxonomy_labels: Option<Vec<String>>,
    #[serde(default)]
    pub edited_span: Option<EditedSpanBody>,
    /// When set, the write is rejected with 409 unless it matches the current revision.
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

async fn adjudicate(
    State(s): State<Shared>,
    UrlPath((id, index)): UrlPath<(String, usize)>,
    Json(req): Json<AdjudicateRequest>,
) -> Result<Json<ReviewItem>, ApiError> {
    let mut guard = run(&s, &id)?.lock().await;
    let run = &mut *guard;
    let d = run
        .report
        .discrepancies
        .get(index)
        .ok_or_else(|| ApiError::not_found(format!("run {id} has no discrepancy {index}")))?;

    let mut labels: Vec<String> = Vec::new();
    for l in req.taxonomy_label.iter().chain(req.taxonomy_labels.iter().flatten()) {
        if !s.taxonomy.iter().any(|t| &t.id == l) {
            return Err(ApiError::bad_request(format!("unknown taxonomy label {l:?}")));
        }
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    let edited_span = match (req.decision, req.edited_span) {
        (Adjudication::Edited, Some(e)) => {
            let len = metaphor_core::text::char_len(s.gold.get(&d.doc_id).map_or("", |g| g.text()));
            if e.start >= e.end || e.end > len {
                return Err(ApiError::bad_request(format!(
                    "edited span {}-{} is empty or beyond the document ({len} chars)",
                    e.start, e.end
                )));
            }
            Some(Span::new(e.start, e.end, e.metaphor_type.unwrap_or(MetaphorType::Unlabelled)))
        }
        (Adjudication::Edited, None) => return Err(ApiError::bad_request("decision edited needs edited_span")),
        (_, Some(_)) => return Err(ApiError::bad_request("edited_span is only allowed with decision edited")),
        (_, None) => None,
    };
    if let Some(expected) = req.expected_revision {
        if expected != d.revision {
            let mut err = ApiError::new(
                StatusCode::CONFLICT,
                format!("revision is {}, request expected {expected}", d.revision),
            );
            err.current = serde_json::to_value(ReviewItem {
                index,
                discrepancy: d.clone(),
            })
            .ok();
            return Err(err);
        }
    }

    let mut updated = d.clone();
    updated.adjudication = req.decision;
    updated.taxonomy_labels = labels;
    updated.edited_span = edited_span;
    updated.revision = d.revision + 1;
    let mut line = serde_json::to_string(&AdjudicationEntry::of(index, &updated)).map_err(ApiError::internal)?;
    line.push('\n');
    run.log
        .write_all(line.as_bytes())
        .and_then(|_| run.log.sync_data())
        .map_err(|e| ApiError::internal(format!("{}: {e}", run.log_path.display())))?;
    run.report.discrepancies[index] = updated.clone();
    Ok(Json(ReviewItem {
        index,
        discrepancy: updated,
    }))
}

#[derive(Debug, Deserialize)]
struct ContextQuery {
    center: usize,
    width: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContextToken {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub gold: bool,
    /// Model label, when the run's records are available.
    pub pred: Option<bool>,
    /// Inside an in-prompt example sentence (not scored).
    pub masked: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContextResponse {
    pub doc_id: String,
    pub center: usize,
    pub width: usize,
    pub token_range: (usize, usize),
    pub char_range: (usize, usize),
    pub text: String,
    pub tokens: Vec<ContextToken>,
}

async fn document_context(
    State(s): State<Shared>,
    UrlPath((id, doc_id)): UrlPath<(String, String)>,
    Query(q): Query<ContextQuery>,
) -> Result<Json<ContextResponse>, ApiError> {
    let run = run(&s, &id)?.lock().await;
    let doc = s
        .gold
        .get(&doc_id)
        .ok_or_else(|| ApiError::not_found(format!("no document {doc_id}")))?;
    let tokens = doc.tokens();
    if q.center >= tokens.len() {
        return Err(ApiError::bad_request(format!(
            "center {} is beyond the last token ({})",
            q.center,
            tokens.len()
        )));
    }
    let width = q.width.unwrap_or(DEFAULT_CONTEXT_WIDTH);
    let first = q.center.saturating_sub(width);
    let last = (q.center + width + 1).min(tokens.len());
    let gold = doc.token_labels(&tokens);
    let labels = run.labels.get(&doc_id);
    let char_range = (tokens[first].start, tokens[last - 1].end);
    Ok(Json(ContextResponse {
        doc_id: doc_id.clone(),
        center: q.center,
        width,
        token_range: (first, last),
        char_range,
        text: metaphor_core::text::char_slice(doc.text(), char_range.0, char_range.1).to_string(),
        tokens: (first..last)
            .map(|i| ContextToken {
                index: i,
                start: tokens[i].start,
                end: tokens[i].end,
                surface: tokens[i].surface.clone(),
                gold: gold[i],
                pred: labels.map(|(p, _)| p[i]),
                masked: labels.is_some_and(|(_, m)| m[i]),
            })
            .collect(),
    }))
}

#[derive(Debug, Default, Deserialize)]
struct ExportRequest {
    #[serde(default)]
    force: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportResponse {
    pub run_id: String,
    /// Relative to the output directory.
    pub path: String,
    pub tally: ExportTally,
}

/// Write the corrected corpus for a run and compact its adjudication log.
fn export_run(s: &ReviewState, run: &mut RunState, force: bool) -> Result<ExportResponse, ApiError> {
    let run_id = run.report.run_id.clone();
    let (corpus, tally) = export_corrected_corpus(&s.gold, &run.report.discrepancies, force).map_err(|e| match e {
        ExportError::UnadjudicatedRemaining { .. } => ApiError::new(StatusCode::CONFLICT, e.to_string()),
        ExportError::InvalidDecision { .. } | ExportError::UnknownDocument { .. } => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
        }
        ExportError::Corpus(_) => ApiError::internal(e),
    })?;
    let rel = format!("{CORRECTED_DIR}/{run_id}");
    let dir = s.output_dir.join(&rel);
    if dir.is_dir() {
        std::fs::remove_dir_all(&dir).map_err(ApiError::internal)?;
    }
    corpus.write_dir(&dir).map_err(ApiError::internal)?;
    // the result must load back as a valid corpus
    Corpus::load_dir(&dir).map_err(|e| ApiError::internal(format!("corrected corpus does not reparse: {e}")))?;

    let entries: Vec<AdjudicationEntry> = run
        .report
        .discrepancies
        .iter()
        .enumerate()
        .filter(|(_, d)| d.revision > 0)
        .map(|(i, d)| AdjudicationEntry::of(i, d))
        .collect();
    let mut body = serde_json::to_vec_pretty(&entries).map_err(ApiError::internal)?;
    body.push(b'\n');
    write_atomic(&run.state_path, &body).map_err(ApiError::internal)?;
    run.log.set_len(0).map_err(ApiError::internal)?;
    Ok(ExportResponse {
        run_id,
        path: rel,
        tally,
    })
}

async fn export(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<ExportResponse>, ApiError> {
    let req: ExportRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ExportRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let mut run = run(&s, &id)?.lock().await;
    Ok(Json(export_run(&s, &mut run, req.force)?))
}

async fn taxonomy(State(s): State<Shared>) -> Json<Vec<TaxonomyEntry>> {
    Json(s.taxonomy.clone())
}

pub fn router(state: Arc<ReviewState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}/discrepancies", get(list_discrepancies))
        .route("/runs/{id}/discrepancies/{n}/adjudicate", post(adjudicate))
        .route("/runs/{id}/documents/{doc}/context", get(document_context))
        .route("/runs/{id}/export", post(export))
        .route("/taxonomy", get(taxonomy))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind `address` and serve until `shutdown` resolves.
pub async fn serve_review(
    output_dir: impl AsRef<Path>,
    address: SocketAddr,
    options: ReviewOptions,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ReviewError> {
    let state = Arc::new(ReviewState::load(output_dir, &options)?);
    let listener = tokio::net::TcpListener::bind(address).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ReviewError::AddressInUse(address.to_string())
        } else {
            ReviewError::Io(e)
        }
    })?;
    log::info!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, options.ui_dir.as_deref()))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Export a run's corrected corpus from stored adjudications, without the service.
pub fn export_offline(output_dir: impl AsRef<Path>, run_id: &str, force: bool) -> anyhow::Result<ExportResponse> {
    let state = ReviewState::load(output_dir, &ReviewOptions::default())?;
    let run = state
        .runs
        .get(run_id)
        .ok_or_else(|| anyhow::anyhow!("no discrepancy report for run {run_id}"))?;
    let mut run = run.try_lock().expect("not shared");
    export_run(&state, &mut run, force).map_err(|e| anyhow::anyhow!("{}", e.message))
}
