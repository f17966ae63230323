//! Word tokenizer used for scoring and statistics.
//!
//! A token is a maximal run of letters and digits. An apostrophe or hyphen
//! directly between two alphanumerics joins them ("don't", "tough-as-nails");
//! every other character separates tokens and is not itself a token.

use serde::{Deserialize, Serialize};

/// A word token with char offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = i + 1;
        loop {
            while j < chars.len() && is_word_char(chars[j]) {
                j += 1;
            }
            if j + 1 < chars.len() && is_joiner(chars[j]) && is_word_char(chars[j + 1]) {
                j += 2;
                continue;
            }
            break;
        }
        tokens.push(Token {
            start,
            end: j,
            surface: chars[start..j].iter().collect(),
        });
        i = j;
    }
    tokens
}

/// Token indices whose char range intersects `[start, end)`.
pub fn tokens_in_range(tokens: &[Token], start: usize, end: usize) -> std::ops::Range<usize> {
    let first = tokens.partition_point(|t| t.end <= start);
    let last = tokens.partition_point(|t| t.start < end);
    first..last.max(first)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.surface).collect()
    }

    #[test]
    fn whitespace_split_offsets() {
        let toks = tokenize("tells the tale");
        let offs: Vec<_> = toks.iter().map(|t| (t.surface.as_str(), t.start, t.end)).collect();
        assert_eq!(offs, vec![("tells", 0, 5), ("the", 6, 9), ("tale", 10, 14)]);
    }

    #[test]
    fn internal_hyphens_and_apostrophes_join() {
        assert_eq!(surfaces("tough-as-nails movie"), vec!["tough-as-nails", "movie"]);
        assert_eq!(surfaces("don't  it’s"), vec!["don't", "it’s"]);
    }

    #[test]
    fn punctuation_dropped() {
        assert_eq!(surfaces("Wait... what?!"), vec!["Wait", "what"]);
        assert_eq!(surfaces("-- 'quoted' -x- a--b"), vec!["quoted", "x", "a", "b"]);
        assert!(tokenize("?!...").is_empty());
    }

    #[test]
    fn range_lookup() {
        let toks = tokenize("tells the tale of woe");
        assert_eq!(tokens_in_range(&toks, 6, 14), 1..3);
        assert_eq!(tokens_in_range(&toks, 5, 6), 1..1);
        assert_eq!(tokens_in_range(&toks, 12, 13), 2..3);
    }
}
