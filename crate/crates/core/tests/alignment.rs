use metaphor_core::corpus::tokenize;
use metaphor_core::evaluator::{align, fold, lcs_pairs, project_labels, ExtractionMethod, SanitizedAnnotation};
use proptest::prelude::*;

/// LCS length by trying every subsequence of `a`, longest first.
fn brute_force_lcs_len(a: &[u8], b: &[u8]) -> usize {
    let is_subsequence = |sub: &[u8]| {
        let mut it = b.iter();
        sub.iter().all(|x| it.any(|y| y == x))
    };
    let n = a.len();
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<u8> = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        if is_subsequence(&sub) {
            best = k;
        }
    }
    best
}

const WORDS: [&str; 8] = ["the", "film", "Sank", "like", "a", "stone", "don't", "river"];

fn words() -> impl Strategy<Value = Vec<&'static str>> {
    proptest::collection::vec(proptest::sample::select(&WORDS[..]), 1..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lcs_matches_brute_force(
        a in proptest::collection::vec(0u8..3, 0..10),
        b in proptest::collection::vec(0u8..3, 0..10),
    ) {
        let pairs = lcs_pairs(&a, &b);
        prop_assert_eq!(pairs.len(), brute_force_lcs_len(&a, &b));
        for w in pairs.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        for &(i, j) in &pairs {
            prop_assert_eq!(a[i], b[j]);
        }
    }

    #[test]
    fn tags_and_whitespace_keep_fidelity(ws in words(), inserts in proptest::collection::vec((0usize..30, 0usize..4), 0..10)) {
        let original = ws.join(" ");
        let mut pieces: Vec<String> = ws.iter().map(|w| w.to_string()).collect();
        for (at, what) in inserts {
            let at = at % pieces.len();
            let extra = ["<Metaphor>", "</Metaphor>", "  ", "\n"][what];
            pieces[at] = format!("{extra}{}", pieces[at]);
        }
        let echo = pieces.join(" ");
        let stripped = echo.replace("<Metaphor>", "").replace("</Metaphor>", "");
        prop_assert_eq!(align(&stripped, &original).fidelity, 1.0);
        prop_assert_eq!(align(&echo, &original).fidelity, 1.0);
    }

    #[test]
    fn deleting_tokens_gives_exact_fidelity(ws in words(), drop in proptest::collection::vec(any::<bool>(), 30)) {
        let original = ws.join(" ");
        let kept: Vec<&str> = ws.iter().zip(&drop).filter(|(_, d)| !**d).map(|(w, _)| *w).collect();
        let k = ws.len() - kept.len();
        let r = align(&kept.join(" "), &original);
        prop_assert_eq!(r.fidelity, (ws.len() - k) as f64 / ws.len() as f64);
        prop_assert_eq!(r.unmatched_original.len(), k);
    }

    #[test]
    fn shuffled_clauses_project_only_through_ordered_matches(
        clauses in proptest::collection::vec(proptest::collection::vec(proptest::sample::select(&WORDS[..]), 1..5), 2..5),
        tagged in proptest::collection::vec(any::<bool>(), 5),
        rot in 1usize..4,
    ) {
        let original = clauses.iter().map(|c| c.join(" ")).collect::<Vec<_>>().join(", ");
        let mut order: Vec<usize> = (0..clauses.len()).collect();
        order.rotate_left(rot % clauses.len());
        let output = order
            .iter()
            .map(|&i| {
                let c = clauses[i].join(" ");
                if tagged[i] { format!("<Metaphor>{c}</Metaphor>") } else { c }
            })
            .collect::<Vec<_>>()
            .join(", ");
        let stripped = output.replace("<Metaphor>", "").replace("</Metaphor>", "");
        let orig_tokens = tokenize(&original);
        let out_tokens = tokenize(&stripped);
        let a: Vec<u8> = orig_tokens.iter().map(|t| WORDS.iter().position(|w| fold(w) == fold(&t.surface)).unwrap() as u8).collect();
        let b: Vec<u8> = out_tokens.iter().map(|t| WORDS.iter().position(|w| fold(w) == fold(&t.surface)).unwrap() as u8).collect();

        let report = align(&stripped, &original);
        if a.len() <= 16 {
            prop_assert_eq!(report.matched_pairs.len(), brute_force_lcs_len(&a, &b));
        }
        // expected labels derived from the matching itself
        let mut out_labels = Vec::new();
        for &i in &order {
            out_labels.extend(std::iter::repeat_n(tagged[i], clauses[i].len()));
        }
        let mut expected = vec![false; a.len()];
        for &(i, j) in &report.matched_pairs {
            prop_assert_eq!(a[i], b[j]);
            expected[i] = out_labels[j];
        }
        let sanitized = SanitizedAnnotation {
            annotated_text: output.clone(),
            extraction_method: ExtractionMethod::Whole,
            warnings: vec![],
        };
        let projection = project_labels(&sanitized, &report, &orig_tokens);
        prop_assert_eq!(projection.labels, expected);
        prop_assert_eq!(projection.excluded_token_count, a.len() - report.matched_pairs.len());
    }
}

#[test]
fn paraphrase_among_ten() {
    let r = align(
        "one two three four 5 six seven eight nine ten",
        "one two three four five six seven eight nine ten",
    );
    assert_eq!(r.fidelity, 0.9);
    assert_eq!((r.unmatched_original.clone(), r.unmatched_output.clone()), (vec![4], vec![4]));
    let a: Vec<u8> = (0..10).collect();
    let mut b = a.clone();
    b[4] = 99;
    assert_eq!(brute_force_lcs_len(&a, &b), 9);
}
