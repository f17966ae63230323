//! Strict inline `<Metaphor>` markup.
//!
//! The grammar is case-sensitive: `<Metaphor>`, `<Metaphor type="conventional">`,
//! `<Metaphor type="creative">` and `</Metaphor>`. Any other `<` is literal text.

use super::{AnnotatedDocument, MetaphorType, RawDocument, Span};
use crate::error::ParseError;

pub const OPEN_TAG: &str = "<Metaphor>";
pub const CLOSE_TAG: &str = "</Metaphor>";
const OPEN_PREFIX: &str = "<Metaphor";
const CLOSE_PREFIX: &str = "</Metaphor";
const OPEN_CONVENTIONAL: &str = "<Metaphor type=\"conventional\">";
const OPEN_CREATIVE: &str = "<Metaphor type=\"creative\">";

enum Tag {
    Open(MetaphorType),
    Close,
}

/// Recognise a tag at the start of `rest`. Returns the tag and its byte length.
fn match_tag(rest: &str, offset: usize) -> Result<Option<(Tag, usize)>, ParseError> {
    if let Some(after) = rest.strip_prefix(CLOSE_PREFIX) {
        return match after.chars().next() {
            Some('>') => Ok(Some((Tag::Close, CLOSE_TAG.len()))),
            Some(c) if c.is_whitespace() || c == '/' => Err(ParseError::MalformedTag { offset }),
            _ => Ok(None),
        };
    }
    if let Some(after) = rest.strip_prefix(OPEN_PREFIX) {
        return match after.chars().next() {
            Some('>') => Ok(Some((Tag::Open(MetaphorType::Unlabelled), OPEN_TAG.len()))),
            Some(c) if c.is_whitespace() || c == '/' => {
                if rest.starts_with(OPEN_CONVENTIONAL) {
                    Ok(Some((Tag::Open(MetaphorType::Conventional), OPEN_CONVENTIONAL.len())))
                } else if rest.starts_with(OPEN_CREATIVE) {
                    Ok(Some((Tag::Open(MetaphorType::Creative), OPEN_CREATIVE.len())))
                } else {
                    Err(ParseError::MalformedTag { offset })
                }
            }
            _ => Ok(None),
        };
    }
    Ok(None)
}

/// Parse tagged text into the stripped text and its spans.
///
/// Offsets in errors are char offsets into the tagged input.
pub fn parse_inline_text(input: &str) -> Result<(String, Vec<Span>), ParseError> {
    let mut text = String::with_capacity(input.len());
    let mut spans = Vec::new();
    // (input offset of the open tag, output offset, type)
    let mut open: Option<(usize, usize, MetaphorType)> = None;
    let mut out_len = 0usize;
    let mut in_offset = 0usize;
    let mut byte = 0usize;

    while byte < input.len() {
        let rest = &input[byte..];
        if rest.starts_with('<') {
            if let Some((tag, len)) = match_tag(rest, in_offset)? {
                match tag {
                    Tag::Open(kind) => {
                        if let Some((outer, _, _)) = open {
                            return Err(ParseError::NestedTags {
                                outer,
                                inner: in_offset,
                            });
                        }
                        open = Some((in_offset, out_len, kind));
                    }
                    Tag::Close => match open.take() {
                        None => return Err(ParseError::UnbalancedTags { offset: in_offset, unclosed: false }),
                        Some((open_at, start, kind)) => {
                            if start == out_len {
                                return Err(ParseError::EmptySpan { offset: open_at });
                            }
                            spans.push(Span::new(start, out_len, kind));
                        }
                    },
                }
                // Tags are ASCII, so byte length == char length.
                byte += len;
                in_offset += len;
                continue;
            }
        }
        let c = rest.chars().next().expect("non-empty remainder");
        text.push(c);
        byte += c.len_utf8();
        in_offset += 1;
        out_len += 1;
    }

    if let Some((offset, _, _)) = open {
        return Err(ParseError::UnbalancedTags { offset, unclosed: true });
    }
    Ok((text, spans))
}

/// Parse inline-tagged text into an [`AnnotatedDocument`] with the given id.
pub fn parse_inline(id: &str, input: &str) -> Result<AnnotatedDocument, ParseError> {
    let (text, spans) = parse_inline_text(input)?;
    Ok(AnnotatedDocument {
        doc: RawDocument {
            id: id.to_string(),
            text,
        },
        spans,
    })
}

/// Insert tags for `spans` into `text`. Spans must be sorted, non-overlapping and in range.
pub fn serialize_spans(text: &str, spans: &[Span], emit_types: bool) -> String {
    let mut out = String::with_capacity(text.len() + spans.len() * 24);
    let mut spans = spans.iter().peekable();
    let mut current_end: Option<usize> = None;
    for (i, c) in text.chars().enumerate() {
        if current_end == Some(i) {
            out.push_str(CLOSE_TAG);
            current_end = None;
        }
        if let Some(span) = spans.peek() {
            if span.start == i {
                out.push_str(open_tag(span.metaphor_type, emit_types));
                current_end = Some(span.end);
                spans.next();
            }
        }
        out.push(c);
    }
    if current_end.is_some() {
        out.push_str(CLOSE_TAG);
    }
    out
}

fn open_tag(kind: MetaphorType, emit_types: bool) -> &'static str {
    match (emit_types, kind) {
        (true, MetaphorType::Conventional) => OPEN_CONVENTIONAL,
        (true, MetaphorType::Creative) => OPEN_CREATIVE,
        _ => OPEN_TAG,
    }
}

/// Exact inverse of [`parse_inline`].
pub fn serialize_inline(doc: &AnnotatedDocument, emit_types: bool) -> String {
    serialize_spans(&doc.doc.text, &doc.spans, emit_types)
}

/// Remove every strict tag occurrence from `input` without validating balance.
pub fn strip_tags(input: &str) -> String {
    input
        .replace(OPEN_CONVENTIONAL, "")
        .replace(OPEN_CREATIVE, "")
        .replace(OPEN_TAG, "")
        .replace(CLOSE_TAG, "")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_span() {
        let doc = parse_inline("d", "a <Metaphor>sunken ship</Metaphor> of a movie").unwrap();
        assert_eq!(doc.doc.text, "a sunken ship of a movie");
        assert_eq!(doc.spans, vec![Span::new(2, 13, MetaphorType::Unlabelled)]);
    }

    #[test]
    fn no_tags_is_identity() {
        let doc = parse_inline("d", "no tags here").unwrap();
        assert_eq!(doc.doc.text, "no tags here");
        assert!(doc.spans.is_empty());
        assert_eq!(serialize_inline(&doc, true), "no tags here");
    }

    #[test]
    fn nested_tags_rejected() {
        let err = parse_inline("d", "<Metaphor>a <Metaphor>b</Metaphor></Metaphor>").unwrap_err();
        assert_eq!(err, ParseError::NestedTags { outer: 0, inner: 12 });
    }

    #[test]
    fn unbalanced_tags_report_offsets() {
        assert_eq!(
            parse_inline("d", "ab <Metaphor>cd").unwrap_err(),
            ParseError::UnbalancedTags { offset: 3, unclosed: true }
        );
        assert_eq!(
            parse_inline("d", "ab</Metaphor>").unwrap_err(),
            ParseError::UnbalancedTags { offset: 2, unclosed: false }
        );
    }

    #[test]
    fn empty_span_rejected() {
        assert_eq!(
            parse_inline("d", "x <Metaphor></Metaphor> y").unwrap_err(),
            ParseError::EmptySpan { offset: 2 }
        );
    }

    #[test]
    fn typed_tags_round_trip() {
        let input = "the <Metaphor type=\"creative\">root canal</Metaphor> of <Metaphor type=\"conventional\">cinema</Metaphor>";
        let doc = parse_inline("d", input).unwrap();
        assert_eq!(doc.spans[0].metaphor_type, MetaphorType::Creative);
        assert_eq!(doc.spans[1].metaphor_type, MetaphorType::Conventional);
        assert_eq!(serialize_inline(&doc, true), input);
        assert_eq!(
            serialize_inline(&doc, false),
            "the <Metaphor>root canal</Metaphor> of <Metaphor>cinema</Metaphor>"
        );
    }

    #[test]
    fn bad_attribute_is_malformed() {
        assert_eq!(
            parse_inline("d", "<Metaphor type=\"novel\">x</Metaphor>").unwrap_err(),
            ParseError::MalformedTag { offset: 0 }
        );
        assert_eq!(
            parse_inline("d", "<Metaphor>x</Metaphor >").unwrap_err(),
            ParseError::MalformedTag { offset: 11 }
        );
    }

    #[test]
    fn lowercase_tags_are_literal_text() {
        let doc = parse_inline("d", "<metaphor>x</metaphor> a < b").unwrap();
        assert_eq!(doc.doc.text, "<metaphor>x</metaphor> a < b");
        assert!(doc.spans.is_empty());
    }

    #[test]
    fn adjacent_spans_and_multibyte_offsets() {
        let input = "“<Metaphor>café</Metaphor><Metaphor>noir</Metaphor>”";
        let doc = parse_inline("d", input).unwrap();
        assert_eq!(doc.doc.text, "“cafénoir”");
        assert_eq!(doc.spans[0].range(), (1, 5));
        assert_eq!(doc.spans[1].range(), (5, 9));
        assert_eq!(serialize_inline(&doc, false), input);
    }

    #[test]
    fn span_at_end_of_text_closes() {
        let doc = parse_inline("d", "it <Metaphor>sank</Metaphor>").unwrap();
        assert_eq!(serialize_inline(&doc, false), "it <Metaphor>sank</Metaphor>");
    }
}
