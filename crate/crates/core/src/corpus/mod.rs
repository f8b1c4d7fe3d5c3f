//! Document and annotation model for offset-addressed full-text articles.
//!
//! All offsets count Unicode scalar values from the start of the document.
//! Passages are contiguous: each one begins where the previous one ends.

mod io;
mod sentences;

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::span::{char_len, char_slice, Span};

pub use io::{load_corpus, read_corpus, write_corpus, ReadOptions};
pub use sentences::{abbreviations, split_sentences, SentenceSpan, ABBREVIATIONS_VERSION};

pub type Corpus = Vec<Document>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Passage {
    pub section: String,
    pub offset: usize,
    pub text: String,
}

impl Passage {
    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }

    pub fn end(&self) -> usize {
        self.offset + self.char_len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Annotation {
    pub start: usize,
    pub length: usize,
    #[serde(rename = "text")]
    pub surface: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    #[serde(rename = "mesh")]
    pub mesh_ids: Vec<String>,
}

impl Annotation {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn span(&self) -> Span {
        Span::new(self.start, self.length, self.entity_type.clone())
    }

    /// Maps the `"-"` placeholder for unlinkable mentions to the empty list.
    pub fn normalize_mesh(&mut self) {
        if self.mesh_ids.len() == 1 && self.mesh_ids[0] == "-" {
            self.mesh_ids.clear();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub doc_id: String,
    pub passages: Vec<Passage>,
    pub annotations: Vec<Annotation>,
}

impl Document {
    /// Index of the passage that fully contains `[start, start + length)`.
    pub fn passage_containing(&self, start: usize, length: usize) -> Option<usize> {
        let idx = self
            .passages
            .partition_point(|p| p.offset <= start)
            .checked_sub(1)?;
        let p = &self.passages[idx];
        (p.offset <= start && start + length <= p.end()).then_some(idx)
    }

    /// Document text for `[start, start + length)`, if it lies inside one passage.
    pub fn text_at(&self, start: usize, length: usize) -> Option<&str> {
        let p = &self.passages[self.passage_containing(start, length)?];
        char_slice(&p.text, start - p.offset, length)
    }

    /// Sentence spans of every passage, shifted into document coordinates.
    pub fn sentences(&self) -> Vec<SentenceSpan> {
        self.passages
            .iter()
            .flat_map(|p| {
                split_sentences(&p.text)
                    .into_iter()
                    .map(move |s| SentenceSpan::new(s.start + p.offset, s.length))
            })
            .collect()
    }

    /// Assigns each annotation to the sentence that contains it.
    pub fn project_annotations(&self) -> SentenceProjection {
        let sentences = self.sentences();
        let mut conflicts = Vec::new();
        let assignment = self
            .annotations
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let idx = sentences
                    .partition_point(|s| s.start <= a.start)
                    .checked_sub(1);
                let found = idx.filter(|&j| a.end() <= sentences[j].end());
                if found.is_none() {
                    conflicts.push(i);
                }
                found
            })
            .collect();
        SentenceProjection {
            sentences,
            assignment,
            conflicts,
        }
    }
}

/// Result of placing a document's annotations into its sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceProjection {
    pub sentences: Vec<SentenceSpan>,
    /// Sentence index per annotation, `None` when the annotation crosses a
    /// sentence boundary (or falls between sentences).
    pub assignment: Vec<Option<usize>>,
    /// Indices of annotations without a containing sentence.
    pub conflicts: Vec<usize>,
}

impl SentenceProjection {
    pub fn conflict_count(&self) -> usize {
        self.conflicts.len()
    }
}

/// A broken document or annotation invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotation: Option<usize>,
    pub message: String,
}

impl Violation {
    fn passage(index: usize, field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: format!("passages[{index}].{field}"),
            annotation: None,
            message: message.into(),
        }
    }

    fn annotation(index: usize, field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: format!("annotations[{index}].{field}"),
            annotation: Some(index),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// True for identifiers of the form letter-then-digits, e.g. `D000001`.
pub fn is_mesh_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && id.len() > 1
        && chars.all(|c| c.is_ascii_digit())
}

/// Checks every document and annotation invariant; an empty result means the
/// document is valid.
pub fn validate_document(doc: &Document) -> Vec<Violation> {
    let mut out = Vec::new();

    if doc.doc_id.is_empty() {
        out.push(Violation {
            field: "doc_id".into(),
            annotation: None,
            message: "empty document id".into(),
        });
    }

    for (i, p) in doc.passages.iter().enumerate() {
        if p.text.is_empty() {
            out.push(Violation::passage(i, "text", "empty passage text"));
        }
        if i > 0 {
            let prev = &doc.passages[i - 1];
            if p.offset != prev.end() {
                out.push(Violation::passage(
                    i,
                    "offset",
                    format!(
                        "expected {} (previous passage end), found {}",
                        prev.end(),
                        p.offset
                    ),
                ));
            }
        }
    }

    for (i, a) in doc.annotations.iter().enumerate() {
        if a.length == 0 {
            out.push(Violation::annotation(i, "length", "zero-length annotation"));
        } else {
            match doc.text_at(a.start, a.length) {
                None => out.push(Violation::annotation(
                    i,
                    "start",
                    format!(
                        "span {}+{} is not inside a single passage",
                        a.start, a.length
                    ),
                )),
                Some(text) if text != a.surface => out.push(Violation::annotation(
                    i,
                    "text",
                    format!(
                        "surface {:?} differs from document text {:?}",
                        a.surface, text
                    ),
                )),
                Some(_) => {}
            }
        }
        if a.entity_type.is_empty() {
            out.push(Violation::annotation(i, "type", "empty entity type"));
        }
        let mut seen = HashSet::new();
        for id in &a.mesh_ids {
            if !is_mesh_id(id) {
                out.push(Violation::annotation(
                    i,
                    "mesh",
                    format!("malformed MeSH id {id:?}"),
                ));
            } else if !seen.insert(id.as_str()) {
                out.push(Violation::annotation(
                    i,
                    "mesh",
                    format!("duplicate MeSH id {id}"),
                ));
            }
        }
    }
    out
}
