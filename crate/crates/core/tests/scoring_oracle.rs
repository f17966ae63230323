use std::collections::BTreeSet;

use metaphor_core::evaluator::{score_tokens, ConfusionCounts};
use proptest::prelude::*;

/// Scores computed from explicit token index sets.
fn brute_force(gold: &[bool], pred: &[bool], mask: &[bool]) -> (ConfusionCounts, f64, f64, f64) {
    let set = |labels: &[bool]| -> BTreeSet<usize> {
        (0..labels.len()).filter(|&i| labels[i] && !mask[i]).collect()
    };
    let (g, p) = (set(gold), set(pred));
    let tp = g.intersection(&p).count();
    let fp = p.difference(&g).count();
    let fn_ = g.difference(&p).count();
    let counts = ConfusionCounts { tp, fp, fn_ };
    if g.is_empty() && p.is_empty() {
        return (counts, 1.0, 1.0, 1.0);
    }
    let precision = if p.is_empty() { 0.0 } else { tp as f64 / p.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { tp as f64 / g.len() as f64 };
    let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (counts, precision, recall, f1)
}

fn triple() -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<bool>)> {
    (0usize..=12).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(proptest::bool::weighted(0.2), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn equals_brute_force((g, p, m) in triple()) {
        let s = score_tokens(&g, &p, &m).unwrap();
        let (counts, precision, recall, f1) = brute_force(&g, &p, &m);
        prop_assert_eq!(s.counts, counts);
        prop_assert_eq!((s.precision, s.recall, s.f1), (precision, recall, f1));
    }

    #[test]
    fn swap_symmetry((g, p, m) in triple()) {
        let a = score_tokens(&g, &p, &m).unwrap();
        let b = score_tokens(&p, &g, &m).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert!((a.f1 - b.f1).abs() < 1e-15);
    }

    #[test]
    fn bounds((g, p, m) in triple()) {
        let s = score_tokens(&g, &p, &m).unwrap();
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(s.f1 <= (s.precision + s.recall) / 2.0 + 1e-12);
    }

    #[test]
    fn mask_toggle_removes_exactly_the_sentence((g, p, m) in triple(), a in 0usize..13, b in 0usize..13) {
        let n = g.len();
        let (lo, hi) = (a.min(b).min(n), a.max(b).min(n));
        let mut unmasked = m.clone();
        let mut masked = m.clone();
        for i in lo..hi {
            unmasked[i] = false;
            masked[i] = true;
        }
        let full = score_tokens(&g, &p, &unmasked).unwrap().counts;
        let less = score_tokens(&g, &p, &masked).unwrap().counts;
        let mut part = ConfusionCounts::default();
        for i in lo..hi {
            match (g[i], p[i]) {
                (true, true) => part.tp += 1,
                (false, true) => part.fp += 1,
                (true, false) => part.fn_ += 1,
                _ => {}
            }
        }
        let mut sum = less;
        sum.add(&part);
        prop_assert_eq!(full, sum);
    }
}

#[test]
fn worked_example() {
    let gold = [true, true, true];
    let pred = [false, false, true];
    let s = score_tokens(&gold, &pred, &[false; 3]).unwrap();
    assert!((s.precision - 1.0).abs() < 1e-9);
    assert!((s.recall - 0.3333).abs() < 1e-4);
    assert!((s.f1 - 0.5).abs() < 1e-9);
}
