//! Non-neural core of a chemical mention pipeline: corpus handling and
//! sentence splitting, IOB2 tagging with probability ensembling, strict and
//! approximate evaluation, MeSH linking over an exact cosine index with
//! self-alignment refinement, and a text-to-text prompt codec.
//!
//! Model outputs (token probabilities, embedding vectors, generated answers)
//! enter through the file formats defined in each module.

pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod linker;
pub mod metrics;
pub mod span;
pub mod tagging;
pub mod text2text;

use serde::{Deserialize, Serialize};

pub use corpus::{Annotation, Corpus, Document, Passage, SentenceSpan};
pub use error::{Error, Result};
pub use linker::{ConceptIndex, ConceptRecord, LinkResult, RefineConfig};
pub use metrics::{MatchCounts, MatchMode, MetricReport};
pub use span::Span;
pub use tagging::{Tag, TokenProbMatrix, TokenSpan};
pub use text2text::{PromptExample, PromptStyle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ner,
    Linking,
    Indexing,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Ner => "ner",
            Task::Linking => "linking",
            Task::Indexing => "indexing",
        })
    }
}
