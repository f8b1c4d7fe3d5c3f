//! Typed character spans and helpers for addressing text by Unicode scalar
//! value rather than by byte.

use serde::{Deserialize, Serialize};

/// A typed half-open interval `[start, start + length)` in Unicode scalar
/// values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub length: usize,
    pub entity_type: String,
}

impl Span {
    pub fn new(start: usize, length: usize, entity_type: impl Into<String>) -> Self {
        Span {
            start,
            length,
            entity_type: entity_type.into(),
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    /// Number of shared positions with `other`, ignoring type.
    pub fn overlap(&self, other: &Span) -> usize {
        overlap_len(self.start, self.end(), other.start, other.end())
    }
}

pub(crate) fn overlap_len(a_start: usize, a_end: usize, b_start: usize, b_end: usize) -> usize {
    a_end.min(b_end).saturating_sub(a_start.max(b_start))
}

/// Length of `text` in Unicode scalar values.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring of `text` addressed in scalar values, or `None` when the range
/// runs past the end.
pub fn char_slice(text: &str, start: usize, length: usize) -> Option<&str> {
    let mut indices = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()));
    let from = indices.nth(start)?;
    if length == 0 {
        return Some(&text[from..from]);
    }
    let to = indices.nth(length - 1)?;
    Some(&text[from..to])
}
