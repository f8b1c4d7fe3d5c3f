//! IOB2 token labels and probability-matrix ensembling.

mod ensemble;
mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::Span;

pub use ensemble::{
    argmax_decode, ensemble_probs, EnsembleMember, EnsembleSpec, TokenProbMatrix, ROW_SUM_TOLERANCE,
};
pub use io::{read_label_file, read_prob_file, write_label_file, write_prob_file, LabelSequence};

/// Token offsets in Unicode scalar values from the start of the document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub length: usize,
}

impl TokenSpan {
    pub fn new(start: usize, length: usize) -> Self {
        TokenSpan { start, length }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" => Ok(Tag::Outside),
            _ => match s.split_once('-') {
                Some(("B", t)) if !t.is_empty() => Ok(Tag::Begin(t.to_string())),
                Some(("I", t)) if !t.is_empty() => Ok(Tag::Inside(t.to_string())),
                _ => Err(Error::UnknownLabel(s.to_string())),
            },
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How `decode_spans` treats an `I-` label that does not continue a span of
/// the same type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// The stray `I-` opens a new span, as if it were `B-`.
    #[default]
    Lenient,
    /// The stray `I-` is ignored.
    Strict,
}

/// Labels `tokens` with IOB2 tags for `spans`.
///
/// Every span must start at a token start and end at a token end, and spans
/// may not overlap.
pub fn encode_bio(tokens: &[TokenSpan], spans: &[Span]) -> Result<Vec<Tag>> {
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| (spans[i].start, spans[i].end()));
    for w in order.windows(2) {
        if spans[w[1]].start < spans[w[0]].end() {
            return Err(Error::OverlappingAnnotations {
                first: w[0].min(w[1]),
                second: w[0].max(w[1]),
            });
        }
    }

    let mut tags = vec![Tag::Outside; tokens.len()];
    for (i, span) in spans.iter().enumerate() {
        let misaligned = || Error::Misaligned {
            index: i,
            start: span.start,
            length: span.length,
        };
        let first = tokens
            .binary_search_by_key(&span.start, |t| t.start)
            .map_err(|_| misaligned())?;
        let last = tokens
            .binary_search_by_key(&span.end(), |t| t.end())
            .map_err(|_| misaligned())?;
        if last < first || span.length == 0 {
            return Err(misaligned());
        }
        tags[first] = Tag::Begin(span.entity_type.clone());
        for tag in &mut tags[first + 1..=last] {
            *tag = Tag::Inside(span.entity_type.clone());
        }
    }
    Ok(tags)
}

/// Turns maximal `B I…I` runs into spans running from the first token's start
/// to the last token's end.
pub fn decode_spans(labels: &[Tag], tokens: &[TokenSpan], mode: DecodeMode) -> Result<Vec<Span>> {
    if labels.len() != tokens.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            tokens: tokens.len(),
        });
    }

    let mut spans = Vec::new();
    // (entity type, first token, last token)
    let mut open: Option<(&str, usize, usize)> = None;
    let close = |open: &mut Option<(&str, usize, usize)>, spans: &mut Vec<Span>| {
        if let Some((ty, first, last)) = open.take() {
            let start = tokens[first].start;
            spans.push(Span::new(start, tokens[last].end() - start, ty));
        }
    };

    for (i, tag) in labels.iter().enumerate() {
        match tag {
            Tag::Outside => close(&mut open, &mut spans),
            Tag::Begin(ty) => {
                close(&mut open, &mut spans);
                open = Some((ty, i, i));
            }
            Tag::Inside(ty) => match &mut open {
                Some((cur, _, last)) if cur == ty => *last = i,
                _ => {
                    close(&mut open, &mut spans);
                    if mode == DecodeMode::Lenient {
                        open = Some((ty, i, i));
                    }
                }
            },
        }
    }
    close(&mut open, &mut spans);
    Ok(spans)
}
