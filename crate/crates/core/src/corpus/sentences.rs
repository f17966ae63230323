//! Rule-based sentence splitter.
//!
//! A sentence ends at a run of `.`, `?` or `!` (plus any closing quotes or
//! brackets) that is followed by whitespace and an upper-case letter, unless
//! the run is a single period after a known abbreviation. A blank line also
//! ends a sentence.

use serde::{Deserialize, Serialize};

/// Char range of one sentence, trimmed of surrounding whitespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub fn contains(&self, start: usize, end: usize) -> bool {
        self.start <= start && end <= self.end
    }
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "cf",
    "u.s", "u.k", "approx", "dept", "fig", "vol",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closer(c: char) -> bool {
    matches!(c, ')' | ']' | '"' | '\'' | '\u{2019}' | '\u{201D}' | '\u{00BB}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '(' | '[' | '"' | '\'' | '\u{2018}' | '\u{201C}' | '\u{00AB}')
}

fn follows_abbreviation(chars: &[char], period: usize) -> bool {
    let mut start = period;
    while start > 0 && (chars[start - 1].is_alphabetic() || chars[start - 1] == '.') {
        start -= 1;
    }
    if start == period {
        return false;
    }
    let word: String = chars[start..period].iter().collect::<String>().to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

fn boundaries(chars: &[char]) -> Vec<usize> {
    let n = chars.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if is_terminal(c) {
            let mut j = i;
            while j < n && is_terminal(chars[j]) {
                j += 1;
            }
            let single_period = j == i + 1 && c == '.';
            while j < n && is_closer(chars[j]) {
                j += 1;
            }
            if j == n {
                out.push(j);
            } else if chars[j].is_whitespace() {
                let mut k = j;
                while k < n && chars[k].is_whitespace() {
                    k += 1;
                }
                while k < n && is_opener(chars[k]) {
                    k += 1;
                }
                let capital_next = k < n && chars[k].is_uppercase();
                if capital_next && !(single_period && follows_abbreviation(chars, i)) {
                    out.push(j);
                }
            }
            i = j.max(i + 1);
            continue;
        }
        if c == '\n' {
            let mut k = i + 1;
            while k < n && matches!(chars[k], ' ' | '\t' | '\r') {
                k += 1;
            }
            if k < n && chars[k] == '\n' {
                out.push(i);
            }
        }
        i += 1;
    }
    out
}

pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut cursor = 0;
    let push = |from: usize, to: usize, spans: &mut Vec<SentenceSpan>| {
        let mut s = from;
        let mut e = to;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push(SentenceSpan { start: s, end: e });
        }
    };
    for b in boundaries(&chars) {
        if b > cursor {
            push(cursor, b, &mut spans);
            cursor = b;
        }
    }
    push(cursor, chars.len(), &mut spans);
    spans
}
