//! Experiment engine for LLM metaphor identification: expands the
//! method/variant matrix into jobs, runs them with repetitions, writes run
//! records and reports, and serves the discrepancy review API.

pub mod config;
pub mod error;
pub mod export_corrected;
pub mod matrix;
pub mod records;
pub mod report;
pub mod review;
pub mod runner;

pub use config::{ExperimentConfig, Method, ModelSpec, ModelType};
pub use error::{ConfigError, ExportError, ReviewError};
pub use export_corrected::{export_corrected_corpus, tally, ExportTally};
pub use matrix::{cell_seed, expand_matrix, method_family, JobCell};
pub use records::{load_records, Outcome, RecordKey, RecordWriter, RunRecord, RECORDS_FILE};
pub use report::{generate_report, rescore, write_report, DiscrepancyReport, ReportBundle};
pub use review::{router, serve_review, ReviewOptions, ReviewState};
pub use runner::{report_only, run_experiment, Experiment};
