//! Token-level alignment of a model's echoed text against the original.

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Fraction of original tokens matched; 1.0 when the original has no tokens.
    pub fidelity: f64,
    /// (original index, output index), strictly increasing in both.
    pub matched_pairs: Vec<(usize, usize)>,
    pub unmatched_original: Vec<usize>,
    pub unmatched_output: Vec<usize>,
}

/// Comparison key: lower-cased, with typographic apostrophes folded.
pub fn fold(surface: &str) -> String {
    surface.to_lowercase().replace('\u{2019}', "'")
}

pub fn align(output_stripped: &str, original: &str) -> AlignmentReport {
    align_tokens(&tokenize(output_stripped), &tokenize(original))
}

pub fn align_tokens(output: &[Token], original: &[Token]) -> AlignmentReport {
    let a: Vec<String> = original.iter().map(|t| fold(&t.surface)).collect();
    let b: Vec<String> = output.iter().map(|t| fold(&t.surface)).collect();
    let matched_pairs = lcs_pairs(&a, &b);

    let mut orig_hit = vec![false; a.len()];
    let mut out_hit = vec![false; b.len()];
    for &(i, j) in &matched_pairs {
        orig_hit[i] = true;
        out_hit[j] = true;
    }
    let fidelity = if a.is_empty() {
        1.0
    } else {
        matched_pairs.len() as f64 / a.len() as f64
    };
    AlignmentReport {
        fidelity,
        unmatched_original: (0..a.len()).filter(|&i| !orig_hit[i]).collect(),
        unmatched_output: (0..b.len()).filter(|&j| !out_hit[j]).collect(),
        matched_pairs,
    }
}

/// Longest common subsequence of two sequences as index pairs.
///
/// Common prefix and suffix are matched directly, so near-identical inputs
/// only pay for the differing middle.
pub fn lcs_pairs<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let mut prefix = 0;
    while prefix < a.len() && prefix < b.len() && a[prefix] == b[prefix] {
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < a.len() - prefix
        && suffix < b.len() - prefix
        && a[a.len() - 1 - suffix] == b[b.len() - 1 - suffix]
    {
        suffix += 1;
    }
    let am = &a[prefix..a.len() - suffix];
    let bm = &b[prefix..b.len() - suffix];

    let mut pairs: Vec<(usize, usize)> = (0..prefix).map(|i| (i, i)).collect();
    if !am.is_empty() && !bm.is_empty() {
        let (n, m) = (am.len(), bm.len());
        let width = m + 1;
        // suffix table: len[i][j] = LCS(am[i..], bm[j..])
        let mut len = vec![0u32; (n + 1) * width];
        for i in (0..n).rev() {
            for j in (0..m).rev() {
                len[i * width + j] = if am[i] == bm[j] {
                    len[(i + 1) * width + j + 1] + 1
                } else {
                    len[(i + 1) * width + j].max(len[i * width + j + 1])
                };
            }
        }
        let (mut i, mut j) = (0, 0);
        while i < n && j < m {
            if am[i] == bm[j] {
                pairs.push((prefix + i, prefix + j));
                i += 1;
                j += 1;
            } else if len[(i + 1) * width + j] >= len[i * width + j + 1] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    pairs.extend((0..suffix).map(|k| (a.len() - suffix + k, b.len() - suffix + k)));
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts() {
        let r = align("The film sank.", "The film sank.");
        assert_eq!(r.fidelity, 1.0);
        assert!(r.unmatched_original.is_empty() && r.unmatched_output.is_empty());
        assert_eq!(r.matched_pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn one_missing_token() {
        let r = align("the film sank", "The film quickly sank");
        assert_eq!(r.fidelity, 0.75);
        assert_eq!(r.unmatched_original, vec![2]);
    }

    #[test]
    fn paraphrased_token_unmatched_on_both_sides() {
        let original = "one two three four five six seven eight nine ten";
        let output = "one two three four FIVE-ish six seven eight nine ten";
        let r = align(output, original);
        assert!((r.fidelity - 0.9).abs() < 1e-12);
        assert_eq!(r.unmatched_original, vec![4]);
        assert_eq!(r.unmatched_output, vec![4]);
    }

    #[test]
    fn case_and_apostrophe_folding() {
        let r = align("DON'T PANIC", "don\u{2019}t panic");
        assert_eq!(r.fidelity, 1.0);
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(align("", "").fidelity, 1.0);
        assert_eq!(align("", "a b").fidelity, 0.0);
        assert_eq!(align("a b", "").unmatched_output, vec![0, 1]);
    }
}
