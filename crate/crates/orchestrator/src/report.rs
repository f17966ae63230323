//! Reports derived from run records: group summaries, box-plot series, the
//! stats table, failure log and per-run discrepancy reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use metaphor_core::corpus::{tokenize, Corpus};
use metaphor_core::evaluator::{
    aggregate, box_stats, example_mask, export_stats_table, extract_discrepancies, BoxStats, ConfusionCounts,
    Discrepancy, EvalSettings, FailureKind, GroupKey, GroupSummary, StatsInput, StatsMeta,
};
use metaphor_core::promptgen::{PromptCell, Strategy};
use serde::{Deserialize, Serialize};

use crate::matrix::{expand_matrix, method_family};
use crate::records::RunRecord;
use crate::runner::{expected_keys, Experiment};

pub const REPORT_DIR: &str = "report";
pub const DISCREPANCY_DIR: &str = "discrepancies";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSeries {
    pub model: String,
    /// `method` for method families, `variant` for individual cells.
    pub level: String,
    pub group: String,
    pub n: usize,
    pub stats: BoxStats,
}

/// F1 over tokens pooled across every scored document of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSummary {
    pub model: String,
    pub cell: String,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Complete,
    /// Some records failed or are missing.
    Partial,
    /// No record was scored.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub model: String,
    pub cell: String,
    pub expected: usize,
    pub scored: usize,
    pub failed: usize,
    pub missing: usize,
    pub state: CellState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub run_id: String,
    pub doc_id: String,
    pub kind: FailureKind,
    pub message: String,
    pub fidelity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub run_id: String,
    pub model: String,
    pub cell: String,
    pub repetition: u32,
    pub discrepancies: Vec<Discrepancy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub summaries: Vec<GroupSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pooled: Vec<PooledSummary>,
    pub boxplots: Vec<BoxSeries>,
    pub cells: Vec<CellStatus>,
    /// Counts per failure kind; every kind is present.
    pub failure_counts: BTreeMap<FailureKind, usize>,
    pub failures: Vec<FailureEntry>,
    /// Paths relative to the output directory.
    pub stats_csv: String,
    pub stats_meta: StatsMeta,
    pub discrepancy_reports: Vec<String>,
    #[serde(skip)]
    pub stats_rows_csv: String,
    #[serde(skip)]
    pub discrepancies: Vec<DiscrepancyReport>,
}

fn variant_key(model: &str, cell: &PromptCell) -> GroupKey {
    GroupKey {
        model: model.to_string(),
        method: Some(method_family(cell).to_string()),
        strategy: Some(cell.strategy().as_str().to_string()),
        n_examples: cell.n_examples(),
        ratio: cell.ratio().map(|r| r.as_str().to_string()),
    }
}

fn method_key(model: &str, cell: &PromptCell) -> GroupKey {
    GroupKey {
        model: model.to_string(),
        method: Some(method_family(cell).to_string()),
        strategy: None,
        n_examples: None,
        ratio: None,
    }
}

fn stats_input(exp: &Experiment, r: &RunRecord, f1: f64) -> StatsInput {
    let model_type = exp
        .config
        .model(&r.model)
        .map_or("unknown", |m| m.model_type.as_str());
    let gold = exp.corpus.get(&r.doc_id);
    let prompt_engineering = matches!(r.cell.strategy(), Strategy::ZeroShot | Strategy::FewShot | Strategy::Cot);
    StatsInput {
        f1,
        method: method_family(&r.cell).to_string(),
        strategy: prompt_engineering.then(|| r.cell.strategy().as_str().to_string()),
        n_examples: r.cell.n_examples(),
        ratio: r.cell.ratio().map(|x| x.as_str().to_string()),
        model: r.model.clone(),
        model_type: model_type.to_string(),
        text_length_words: gold.map_or(0, |d| tokenize(d.text()).len()),
        text_id: r.doc_id.clone(),
        run_index: r.repetition as usize,
    }
}

/// Discrepancies for every scored document of one run, in document order.
pub fn run_discrepancies(
    corpus: &Corpus,
    records: &[&RunRecord],
    context_width: usize,
) -> anyhow::Result<Vec<Discrepancy>> {
    let mut out = Vec::new();
    for r in records {
        let Some(pred) = &r.pred_labels else { continue };
        let gold = corpus
            .get(&r.doc_id)
            .with_context(|| format!("record for unknown document {}", r.doc_id))?;
        let tokens = gold.tokens();
        let gold_labels = gold.token_labels(&tokens);
        let mask = example_mask(gold.id(), &tokens, &r.example_sources);
        out.extend(extract_discrepancies(
            gold.id(),
            gold.text(),
            &tokens,
            &gold_labels,
            pred,
            &mask,
            context_width,
        )?);
    }
    Ok(out)
}

/// Derive the full report from records. Records are taken in key order, so
/// the result does not depend on the order they were produced in.
pub fn generate_report(exp: &Experiment, records: &[RunRecord]) -> anyhow::Result<ReportBundle> {
    let mut records: Vec<&RunRecord> = records.iter().collect();
    records.sort_by_key(|r| r.key());
    let cells = expand_matrix(&exp.config)?;

    let mut by_variant: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    let mut by_method: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    let mut pooled: BTreeMap<(String, String), ConfusionCounts> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut failure_counts: BTreeMap<FailureKind, usize> = [
        (FailureKind::Sanitization, 0),
        (FailureKind::Fidelity, 0),
        (FailureKind::Transport, 0),
    ]
    .into_iter()
    .collect();
    let mut stats_inputs = Vec::new();
    let mut per_cell: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    let mut runs: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();

    for r in &records {
        let cell_entry = per_cell.entry((r.model.clone(), r.cell.key())).or_default();
        if let Some(score) = r.score() {
            cell_entry.0 += 1;
            by_variant.entry(variant_key(&r.model, &r.cell)).or_default().push(score.f1);
            by_method.entry(method_key(&r.model, &r.cell)).or_default().push(score.f1);
            pooled.entry((r.model.clone(), r.cell.key())).or_default().add(&score.counts);
            stats_inputs.push(stats_input(exp, r, score.f1));
            runs.entry(r.run_id()).or_default().push(r);
        } else if let Some(f) = r.failure() {
            cell_entry.1 += 1;
            *failure_counts.entry(f.kind).or_default() += 1;
            failures.push(FailureEntry {
                run_id: r.run_id(),
                doc_id: r.doc_id.clone(),
                kind: f.kind,
                message: f.message.clone(),
                fidelity: f.fidelity,
            });
        }
    }

    let mut summaries = Vec::new();
    let mut boxplots = Vec::new();
    for (level, groups) in [("method", &by_method), ("variant", &by_variant)] {
        for (key, scores) in groups {
            summaries.push(aggregate(scores, key.clone())?);
            let group = match level {
                "method" => key.method.clone().unwrap_or_default(),
                _ => variant_label(key),
            };
            boxplots.push(BoxSeries {
                model: key.model.clone(),
                level: level.to_string(),
                group,
                n: scores.len(),
                stats: box_stats(scores)?,
            });
        }
    }

    let expected = expected_keys(exp, &cells)?;
    let mut expected_per_cell: BTreeMap<(String, String), usize> = BTreeMap::new();
    for k in &expected {
        *expected_per_cell.entry((k.model.clone(), k.cell.clone())).or_default() += 1;
    }
    let cell_status = cells
        .iter()
        .map(|jc| {
            let id = (jc.model.clone(), jc.cell.key());
            let expected = expected_per_cell.get(&id).copied().unwrap_or(0);
            let (scored, failed) = per_cell.get(&id).copied().unwrap_or((0, 0));
            let missing = expected.saturating_sub(scored + failed);
            let state = if scored == 0 {
                CellState::Failed
            } else if scored == expected {
                CellState::Complete
            } else {
                CellState::Partial
            };
            CellStatus {
                model: jc.model.clone(),
                cell: jc.cell.key(),
                expected,
                scored,
                failed,
                missing,
                state,
            }
        })
        .collect();

    let table = export_stats_table(&stats_inputs);
    let mut discrepancies = Vec::new();
    for (id, rs) in &runs {
        let first = rs[0];
        discrepancies.push(DiscrepancyReport {
            run_id: id.clone(),
            model: first.model.clone(),
            cell: first.cell.key(),
            repetition: first.repetition,
            discrepancies: run_discrepancies(&exp.corpus, rs, exp.config.context_width)?,
        });
    }

    Ok(ReportBundle {
        summaries,
        pooled: if exp.config.pooled {
            pooled
                .into_iter()
                .map(|((model, cell), counts)| {
                    let (precision, recall, f1) = counts.prf();
                    PooledSummary {
                        model,
                        cell,
                        counts,
                        precision,
                        recall,
                        f1,
                    }
                })
                .collect()
        } else {
            Vec::new()
        },
        boxplots,
        cells: cell_status,
        failure_counts,
        failures,
        stats_csv: format!("{REPORT_DIR}/stats.csv"),
        stats_meta: table.meta.clone(),
        discrepancy_reports: discrepancies
            .iter()
            .map(|d| format!("{REPORT_DIR}/{DISCREPANCY_DIR}/{}.json", d.run_id))
            .collect(),
        stats_rows_csv: table.to_csv_string(),
        discrepancies,
    })
}

fn variant_label(key: &GroupKey) -> String {
    let mut s = key.strategy.clone().unwrap_or_default();
    if let Some(n) = key.n_examples {
        let _ = write!(s, "_n{n}");
    }
    if let Some(r) = &key.ratio {
        let _ = write!(s, "_{r}");
    }
    s
}

/// Fixed-width text table of the group summaries and failure counts.
pub fn summary_table(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<8} {:<28} {:>5} {:>8} {:>17}",
        "model", "level", "group", "n", "median", "IQR"
    );
    for (s, b) in bundle.summaries.iter().zip(&bundle.boxplots) {
        let _ = writeln!(
            out,
            "{:<24} {:<8} {:<28} {:>5} {:>8.4} {:>8.4}-{:<8.4}",
            s.key.model, b.level, b.group, s.n_scores, s.median_f1, s.iqr.0, s.iqr.1
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "failures:");
    for (kind, n) in &bundle.failure_counts {
        let _ = writeln!(out, "  {:<14} {n}", format!("{kind:?}").to_lowercase());
    }
    let incomplete: Vec<&CellStatus> = bundle.cells.iter().filter(|c| c.state != CellState::Complete).collect();
    if !incomplete.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "incomplete cells:");
        for c in incomplete {
            let _ = writeln!(
                out,
                "  {}__{}: {:?}, {} of {} scored, {} failed, {} missing",
                c.model, c.cell, c.state, c.scored, c.expected, c.failed, c.missing
            );
        }
    }
    out
}

fn write_pretty(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// Write every report file under `<output_dir>/report`, replacing earlier ones.
pub fn write_report(output_dir: &Path, bundle: &ReportBundle) -> anyhow::Result<()> {
    let dir = output_dir.join(REPORT_DIR);
    let disc_dir = dir.join(DISCREPANCY_DIR);
    if disc_dir.is_dir() {
        std::fs::remove_dir_all(&disc_dir)?;
    }
    std::fs::create_dir_all(&disc_dir)?;
    write_pretty(&dir.join("report.json"), bundle)?;
    write_pretty(&dir.join("boxplots.json"), &bundle.boxplots)?;
    write_pretty(&dir.join("failures.json"), &bundle.failures)?;
    write_pretty(&dir.join("stats_meta.json"), &bundle.stats_meta)?;
    std::fs::write(dir.join("stats.csv"), &bundle.stats_rows_csv)?;
    std::fs::write(dir.join("summary.txt"), summary_table(bundle))?;
    for d in &bundle.discrepancies {
        write_pretty(&disc_dir.join(format!("{}.json", d.run_id)), d)?;
    }
    Ok(())
}

/// Re-score the stored sanitized outputs of `records` against `corpus`.
/// Records without a sanitized annotation, or whose document is missing, are skipped.
pub fn rescore(records: &[RunRecord], corpus: &Corpus, settings: &EvalSettings) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for r in records {
        let (Some(s), Some(gold)) = (&r.sanitized, corpus.get(&r.doc_id)) else {
            continue;
        };
        match metaphor_core::evaluator::evaluate_response(&s.annotated_text, gold, false, &r.example_sources, settings)
        {
            Ok(scored) => out.push((r.doc_id.clone(), scored.score.f1)),
            Err(f) => log::warn!("rescoring {} {}: {}", r.run_id(), r.doc_id, f.message),
        }
    }
    out
}
