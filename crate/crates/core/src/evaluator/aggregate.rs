//! Group summaries, box-plot statistics and the Smithson–Verkuilen squeeze.

use serde::{Deserialize, Serialize};

use crate::error::EvalError;

/// Grouping key; `None` fields are aggregated over.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub model: String,
    pub method: Option<String>,
    pub strategy: Option<String>,
    pub n_examples: Option<usize>,
    pub ratio: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub key: GroupKey,
    pub median_f1: f64,
    pub iqr: (f64, f64),
    pub n_scores: usize,
    pub scores: Vec<f64>,
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `p * (n - 1)`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn aggregate(scores: &[f64], key: GroupKey) -> Result<GroupSummary, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    let s = sorted(scores);
    Ok(GroupSummary {
        key,
        median_f1: quantile(&s, 0.5),
        iqr: (quantile(&s, 0.25), quantile(&s, 0.75)),
        n_scores: s.len(),
        scores: scores.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme observations within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(scores: &[f64]) -> Result<BoxStats, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    let s = sorted(scores);
    let q1 = quantile(&s, 0.25);
    let q3 = quantile(&s, 0.75);
    let fence = 1.5 * (q3 - q1);
    let (lo_fence, hi_fence) = (q1 - fence, q3 + fence);
    let inside: Vec<f64> = s.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence).collect();
    Ok(BoxStats {
        median: quantile(&s, 0.5),
        q1,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: s.iter().copied().filter(|&x| x < lo_fence || x > hi_fence).collect(),
    })
}

/// `(y (n - 1) + 0.5) / n`, mapping [0, 1] into the open interval (0, 1).
pub fn sv_transform(y: f64, n: usize) -> f64 {
    assert!(n >= 1, "sv_transform needs n >= 1");
    assert!((0.0..=1.0).contains(&y), "sv_transform needs y in [0, 1], got {y}");
    (y * (n - 1) as f64 + 0.5) / n as f64
}
