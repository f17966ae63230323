//! Corpus directories: one `<id>.txt` file of inline-tagged text per document,
//! plus an optional `span_types.kv` sidecar giving span types for documents
//! whose tags carry no `type` attribute.
//!
//! Sidecar lines look like `review_01:2-13 = creative`; blank lines and lines
//! starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{parse_inline, serialize_inline, AnnotatedDocument, MetaphorType};
use crate::error::CorpusError;

pub const SIDECAR_FILE: &str = "span_types.kv";
const DOC_EXTENSION: &str = "txt";

/// Where a document's span types are recorded on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeEncoding {
    /// `type="..."` attributes on the tags.
    Inline,
    /// Entries in the sidecar file.
    Sidecar,
    /// No type information.
    Untyped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<AnnotatedDocument>,
    encodings: BTreeMap<String, TypeEncoding>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Corpus {
    /// Build an in-memory corpus; documents are sorted by id and written with inline types.
    pub fn new(mut documents: Vec<AnnotatedDocument>) -> Result<Self, CorpusError> {
        documents.sort_by(|a, b| a.id().cmp(b.id()));
        let encodings = documents
            .iter()
            .map(|d| (d.id().to_string(), TypeEncoding::Inline))
            .collect();
        let corpus = Self {
            documents,
            encodings,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for d in &self.documents {
            if !seen.insert(d.id()) {
                return Err(CorpusError::DuplicateId {
                    id: d.id().to_string(),
                });
            }
            if d.text().trim().is_empty() {
                return Err(CorpusError::EmptyDocument {
                    id: d.id().to_string(),
                });
            }
            super::validate_spans(crate::text::char_len(d.text()), &d.spans).map_err(|source| {
                CorpusError::Span {
                    id: d.id().to_string(),
                    source,
                }
            })?;
        }
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == DOC_EXTENSION))
            .collect();
        paths.sort();

        let mut documents = Vec::with_capacity(paths.len());
        let mut encodings = BTreeMap::new();
        for path in &paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let raw = fs::read_to_string(path).map_err(io_err(path))?;
            let doc = parse_inline(&id, &raw).map_err(|source| CorpusError::Parse {
                path: path.clone(),
                source,
            })?;
            let typed = doc
                .spans
                .iter()
                .any(|s| s.metaphor_type != MetaphorType::Unlabelled);
            encodings.insert(
                id,
                if typed {
                    TypeEncoding::Inline
                } else {
                    TypeEncoding::Untyped
                },
            );
            documents.push(doc);
        }

        let mut corpus = Self {
            documents,
            encodings,
        };
        let sidecar = dir.join(SIDECAR_FILE);
        if sidecar.is_file() {
            let content = fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
            corpus.apply_sidecar(&content)?;
        }
        corpus.validate()?;
        Ok(corpus)
    }

    fn apply_sidecar(&mut self, content: &str) -> Result<(), CorpusError> {
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| CorpusError::Sidecar {
                line: line_no,
                message: message.to_string(),
            };
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let (doc_id, range) = key
                .trim()
                .rsplit_once(':')
                .ok_or_else(|| bad("expected doc_id:start-end"))?;
            let (start, end) = range.split_once('-').ok_or_else(|| bad("expected start-end"))?;
            let start: usize = start.parse().map_err(|_| bad("bad start offset"))?;
            let end: usize = end.parse().map_err(|_| bad("bad end offset"))?;
            let kind = match value.trim() {
                "conventional" => MetaphorType::Conventional,
                "creative" => MetaphorType::Creative,
                other => return Err(bad(&format!("unknown type {other:?}"))),
            };
            if self.encodings.get(doc_id) == Some(&TypeEncoding::Inline) {
                return Err(bad("document already carries inline type attributes"));
            }
            let doc = self
                .documents
                .iter_mut()
                .find(|d| d.id() == doc_id)
                .ok_or_else(|| bad(&format!("unknown document {doc_id}")))?;
            let span = doc
                .spans
                .iter_mut()
                .find(|s| s.start == start && s.end == end)
                .ok_or_else(|| bad(&format!("no span {start}-{end} in {doc_id}")))?;
            span.metaphor_type = kind;
            self.encodings
                .insert(doc_id.to_string(), TypeEncoding::Sidecar);
        }
        Ok(())
    }

    /// Write the corpus in the same layout it was loaded from.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut sidecar = String::new();
        for d in &self.documents {
            let inline = self.encoding(d.id()) == TypeEncoding::Inline;
            let path = dir.join(format!("{}.{DOC_EXTENSION}", d.id()));
            fs::write(&path, serialize_inline(d, inline)).map_err(io_err(&path))?;
            if !inline {
                for s in &d.spans {
                    if s.metaphor_type != MetaphorType::Unlabelled {
                        sidecar.push_str(&format!(
                            "{}:{}-{} = {}\n",
                            d.id(),
                            s.start,
                            s.end,
                            s.metaphor_type.as_str()
                        ));
                    }
                }
            }
        }
        if !sidecar.is_empty() {
            let path = dir.join(SIDECAR_FILE);
            fs::write(&path, sidecar).map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn documents(&self) -> &[AnnotatedDocument] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<AnnotatedDocument> {
        self.documents
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedDocument> {
        self.documents.iter().find(|d| d.id() == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.id().to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn encoding(&self, id: &str) -> TypeEncoding {
        self.encodings
            .get(id)
            .copied()
            .unwrap_or(TypeEncoding::Inline)
    }

    /// Replace the spans of an existing document, keeping its type encoding.
    pub fn replace_document(&mut self, doc: AnnotatedDocument) -> Result<(), CorpusError> {
        super::validate_spans(crate::text::char_len(doc.text()), &doc.spans).map_err(|source| {
            CorpusError::Span {
                id: doc.id().to_string(),
                source,
            }
        })?;
        match self.documents.iter_mut().find(|d| d.id() == doc.id()) {
            Some(slot) => {
                *slot = doc;
                Ok(())
            }
            None => Err(CorpusError::EmptyDocument {
                id: doc.id().to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_types_load_and_write_back() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "a <Metaphor>gem</Metaphor> of a film").unwrap();
        fs::write(
            dir.path().join("b.txt"),
            "<Metaphor type=\"creative\">velvet</Metaphor> dialogue",
        )
        .unwrap();
        fs::write(dir.path().join(SIDECAR_FILE), "# types\na:2-5 = conventional\n").unwrap();
        let corpus = Corpus::load_dir(dir.path()).unwrap();
        assert_eq!(corpus.ids(), vec!["a", "b"]);
        assert_eq!(corpus.get("a").unwrap().spans[0].metaphor_type, MetaphorType::Conventional);
        assert_eq!(corpus.encoding("a"), TypeEncoding::Sidecar);
        assert_eq!(corpus.encoding("b"), TypeEncoding::Inline);

        let out = tempfile::tempdir().unwrap();
        corpus.write_dir(out.path()).unwrap();
        assert_eq!(
            fs::read_to_string(out.path().join("a.txt")).unwrap(),
            "a <Metaphor>gem</Metaphor> of a film"
        );
        assert_eq!(
            fs::read_to_string(out.path().join(SIDECAR_FILE)).unwrap(),
            "a:2-5 = conventional\n"
        );
        assert_eq!(Corpus::load_dir(out.path()).unwrap(), corpus);
    }

    #[test]
    fn sidecar_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "a <Metaphor>gem</Metaphor>").unwrap();
        fs::write(dir.path().join(SIDECAR_FILE), "\na:0-1 = creative\n").unwrap();
        match Corpus::load_dir(dir.path()) {
            Err(CorpusError::Sidecar { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.txt"), "x <Metaphor>y").unwrap();
        assert!(matches!(
            Corpus::load_dir(dir.path()),
            Err(CorpusError::Parse { .. })
        ));
    }

    #[test]
    fn empty_document_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("e.txt"), "  \n").unwrap();
        assert!(matches!(
            Corpus::load_dir(dir.path()),
            Err(CorpusError::EmptyDocument { .. })
        ));
    }
}
