//! Character-offset helpers.
//!
//! All offsets in this crate count Unicode scalar values, not bytes.

/// Byte positions of every char boundary in a string, indexable by char offset.
#[derive(Debug, Clone)]
pub struct CharMap<'a> {
    text: &'a str,
    bytes: Vec<usize>,
}

impl<'a> CharMap<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bytes.push(text.len());
        Self { text, bytes }
    }

    /// Number of chars in the text.
    pub fn len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_offset(&self, char_offset: usize) -> usize {
        self.bytes[char_offset]
    }

    /// Slice by char offsets. Panics when out of range.
    pub fn slice(&self, start: usize, end: usize) -> &'a str {
        &self.text[self.bytes[start]..self.bytes[end]]
    }
}

/// Number of chars in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slice `text` by char offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    CharMap::new(text).slice(start, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_multibyte_text() {
        let text = "café – “good”";
        let map = CharMap::new(text);
        assert_eq!(map.len(), 13);
        assert_eq!(map.slice(0, 4), "café");
        assert_eq!(map.slice(7, 13), "“good”");
        assert_eq!(char_slice(text, 5, 6), "–");
    }
}
