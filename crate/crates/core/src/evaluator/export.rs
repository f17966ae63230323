//! Long-format score table for external mixed-effects modelling.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::aggregate::sv_transform;

/// Written in place of a value that does not apply to the row's method.
pub const NOT_APPLICABLE: &str = "NA";

pub const STATS_COLUMNS: [&str; 12] = [
    "f1",
    "f1_sv",
    "method",
    "strategy",
    "n_examples",
    "ratio",
    "model",
    "model_type",
    "text_length_words",
    "text_length_centered",
    "text_id",
    "run_index",
];

/// One scored (document, model, variant, repetition) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsInput {
    pub f1: f64,
    pub method: String,
    pub strategy: Option<String>,
    pub n_examples: Option<usize>,
    pub ratio: Option<String>,
    pub model: String,
    pub model_type: String,
    pub text_length_words: usize,
    pub text_id: String,
    pub run_index: usize,
}

/// A CSV row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub f1: f64,
    pub f1_sv: f64,
    pub method: String,
    pub strategy: String,
    pub n_examples: String,
    pub ratio: String,
    pub model: String,
    pub model_type: String,
    pub text_length_words: usize,
    pub text_length_centered: f64,
    pub text_id: String,
    pub run_index: usize,
}

/// Values the CSV cannot carry in its fixed header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsMeta {
    pub columns: Vec<String>,
    pub row_count: usize,
    /// The n used for `f1_sv`.
    pub sv_n: usize,
    pub mean_text_length_words: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
    pub meta: StatsMeta,
}

/// Build the table in input order. `f1_sv` uses n = number of exported rows and
/// text length is centred on the mean over those rows.
pub fn export_stats_table(inputs: &[StatsInput]) -> StatsTable {
    let n = inputs.len();
    let mean = if n == 0 {
        0.0
    } else {
        inputs.iter().map(|r| r.text_length_words as f64).sum::<f64>() / n as f64
    };
    let na = |v: &Option<String>| v.clone().unwrap_or_else(|| NOT_APPLICABLE.to_string());
    let rows = inputs
        .iter()
        .map(|r| StatsRow {
            f1: r.f1,
            f1_sv: sv_transform(r.f1, n),
            method: r.method.clone(),
            strategy: na(&r.strategy),
            n_examples: r.n_examples.map_or_else(|| NOT_APPLICABLE.to_string(), |k| k.to_string()),
            ratio: na(&r.ratio),
            model: r.model.clone(),
            model_type: r.model_type.clone(),
            text_length_words: r.text_length_words,
            text_length_centered: r.text_length_words as f64 - mean,
            text_id: r.text_id.clone(),
            run_index: r.run_index,
        })
        .collect();
    StatsTable {
        rows,
        meta: StatsMeta {
            columns: STATS_COLUMNS.iter().map(|c| c.to_string()).collect(),
            row_count: n,
            sv_n: n,
            mean_text_length_words: mean,
        },
    }
}

impl StatsTable {
    /// RFC 4180 CSV with the header row exactly [`STATS_COLUMNS`].
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .has_headers(false)
            .from_writer(out);
        w.write_record(STATS_COLUMNS)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(f1: f64, words: usize, strategy: Option<&str>) -> StatsInput {
        StatsInput {
            f1,
            method: "prompt_engineering".into(),
            strategy: strategy.map(String::from),
            n_examples: None,
            ratio: None,
            model: "m".into(),
            model_type: "closed".into(),
            text_length_words: words,
            text_id: "d1".into(),
            run_index: 0,
        }
    }

    #[test]
    fn centring_and_squeeze() {
        let t = export_stats_table(&[input(1.0, 10, Some("zero_shot")), input(0.0, 20, None), input(0.5, 33, None)]);
        let sum: f64 = t.rows.iter().map(|r| r.text_length_centered).sum();
        assert!(sum.abs() < 1e-9);
        assert_eq!(t.meta.sv_n, 3);
        assert!((t.rows[0].f1_sv - 2.5 / 3.0).abs() < 1e-12);
        assert!(t.rows.iter().all(|r| r.f1_sv > 0.0 && r.f1_sv < 1.0));
    }

    #[test]
    fn header_and_na() {
        let t = export_stats_table(&[input(0.5, 4, None)]);
        let csv = t.to_csv_string();
        let mut lines = csv.split("\r\n");
        assert_eq!(lines.next().unwrap(), STATS_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "0.5,0.5,prompt_engineering,NA,NA,NA,m,closed,4,0.0,d1,0");
    }
}
