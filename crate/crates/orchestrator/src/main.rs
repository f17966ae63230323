use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use metaphor_client::{export_finetune_dataset, make_split, to_jsonl};
use metaphor_core::corpus::{corpus_stats, extract_examples, Corpus, MetaphorType};
use metaphor_core::evaluator::TaxonomyEntry;
use metaphor_core::promptgen::{Codebook, Explanations, PromptAssets};
use metaphor_orchestrator::review::{export_offline, ReviewOptions};
use metaphor_orchestrator::{expand_matrix, report_only, run_experiment, serve_review, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "metaphor", version, about = "Run and review LLM metaphor-identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus (and optionally a codebook and explanations) and print statistics.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        explanations: Option<PathBuf>,
    },
    /// Write the prompt of every configured cell for one document.
    Prompts {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        doc: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        repetition: u32,
    },
    /// Run (or resume) an experiment and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Regenerate the report from stored run records.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the review API and UI assets.
    Review {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: SocketAddr,
        /// Directory of built UI assets.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// JSON list of {"id", "name"} taxonomy entries.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
    },
    /// Write the corrected corpus for a run from its stored adjudications.
    ExportCorrected {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long)]
        run: String,
        /// Treat open discrepancies as keep_gold.
        #[arg(long)]
        force: bool,
    },
    /// Write a fine-tuning training set and its manifest.
    FinetuneExport {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        prompts_dir: Option<PathBuf>,
    },
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn validate(corpus: PathBuf, codebook: Option<PathBuf>, explanations: Option<PathBuf>) -> anyhow::Result<()> {
    let corpus = Corpus::load_dir(&corpus).with_context(|| format!("loading {}", corpus.display()))?;
    let stats = corpus_stats(corpus.documents());
    let pool = extract_examples(corpus.documents(), false)?;
    let stratum = |t: MetaphorType| pool.iter().filter(|e| e.uniform_type() == Some(t)).count();
    let mut report = serde_json::json!({
        "corpus": stats,
        "example_sentences": {
            "total": pool.len(),
            "conventional": stratum(MetaphorType::Conventional),
            "creative": stratum(MetaphorType::Creative),
            "mixed_or_unlabelled": pool.len() - stratum(MetaphorType::Conventional) - stratum(MetaphorType::Creative),
        },
    });
    if let Some(path) = explanations {
        let ex = Explanations::load(&path)?;
        let explained = pool.iter().filter(|e| ex.explain(e).is_some()).count();
        report["explanations"] = serde_json::json!({ "entries": ex.len(), "explained_sentences": explained });
    }
    if let Some(path) = codebook {
        let cb = Codebook::load(&path)?;
        report["codebook"] = serde_json::json!({ "title": cb.title, "chunks": cb.chunks.len() });
    }
    print_json(&report)
}

fn prompts(config: PathBuf, doc: String, out: PathBuf, repetition: u32) -> anyhow::Result<()> {
    let exp = Experiment::load(ExperimentConfig::load(&config)?)?;
    let gold = exp
        .corpus
        .get(&doc)
        .with_context(|| format!("no document {doc} in the corpus"))?;
    std::fs::create_dir_all(&out)?;
    let ctx = exp.context();
    let mut cells: Vec<_> = expand_matrix(&exp.config)?.into_iter().map(|j| j.cell).collect();
    cells.sort();
    cells.dedup();
    for cell in cells {
        let examples = ctx.sample(&cell, exp.sampling_seed(&cell, repetition))?;
        let bundle = ctx.build(&cell, &gold.doc, &examples)?;
        let path = out.join(format!("{}.json", cell.key()));
        std::fs::write(&path, serde_json::to_string_pretty(&bundle)? + "\n")?;
        println!("{}", path.display());
    }
    Ok(())
}

fn finetune_export(
    corpus: PathBuf,
    out: PathBuf,
    fraction: f64,
    seed: u64,
    prompts_dir: Option<PathBuf>,
) -> anyhow::Result<()> {
    let corpus = Corpus::load_dir(&corpus)?;
    let assets = match prompts_dir {
        Some(d) => PromptAssets::load_dir(d)?,
        None => PromptAssets::default(),
    };
    let split = make_split(&corpus.ids(), fraction, seed)?;
    let (records, manifest) = export_finetune_dataset(corpus.documents(), &split, assets.get("fine_tune")?)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("train.jsonl"), to_jsonl(&records))?;
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!(
        "{} training records, {} held out, written to {}",
        manifest.n_records,
        manifest.test_doc_ids.len(),
        out.display()
    );
    Ok(())
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Validate {
            corpus,
            codebook,
            explanations,
        } => validate(corpus, codebook, explanations),
        Command::Prompts {
            config,
            doc,
            out,
            repetition,
        } => prompts(config, doc, out, repetition),
        Command::Run { config } => {
            let bundle = run_experiment(ExperimentConfig::load(&config)?).await?;
            print!("{}", metaphor_orchestrator::report::summary_table(&bundle));
            Ok(())
        }
        Command::Report { config } => {
            let bundle = report_only(ExperimentConfig::load(&config)?)?;
            print!("{}", metaphor_orchestrator::report::summary_table(&bundle));
            Ok(())
        }
        Command::Review {
            output_dir,
            addr,
            ui,
            taxonomy,
        } => {
            let taxonomy = match taxonomy {
                Some(p) => Some(
                    serde_json::from_str::<Vec<TaxonomyEntry>>(&std::fs::read_to_string(&p)?)
                        .with_context(|| format!("reading {}", p.display()))?,
                ),
                None => None,
            };
            let options = ReviewOptions { ui_dir: ui, taxonomy };
            serve_review(output_dir, addr, options, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
            Ok(())
        }
        Command::ExportCorrected {
            output_dir,
            run,
            force,
        } => print_json(&export_offline(output_dir, &run, force)?),
        Command::FinetuneExport {
            corpus,
            out,
            fraction,
            seed,
            prompts_dir,
        } => finetune_export(corpus, out, fraction, seed, prompts_dir),
    }
}
