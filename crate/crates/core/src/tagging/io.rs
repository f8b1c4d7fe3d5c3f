//! Probability JSONL (`{"doc_id", "labels", "tokens", "probs"}`) and label
//! JSONL (`{"doc_id", "tokens", "labels"}`), one document per line.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Tag, TokenProbMatrix, TokenSpan};
use crate::error::{Error, Result};
use crate::jsonl::{read_jsonl_file, write_jsonl};

/// Gold or decoded IOB2 labels for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub doc_id: String,
    pub tokens: Vec<TokenSpan>,
    pub labels: Vec<Tag>,
}

/// Reads and validates every matrix in a probability file.
pub fn read_prob_file(path: impl AsRef<Path>) -> Result<Vec<TokenProbMatrix>> {
    let path = path.as_ref();
    let matrices: Vec<TokenProbMatrix> = read_jsonl_file(path)?;
    for (i, m) in matrices.iter().enumerate() {
        m.validate()
            .map_err(|e| Error::parse(&path.display().to_string(), i + 1, e.to_string()))?;
    }
    Ok(matrices)
}

pub fn write_prob_file<W: Write>(out: W, matrices: &[TokenProbMatrix]) -> std::io::Result<()> {
    write_jsonl(out, matrices)
}

pub fn read_label_file(path: impl AsRef<Path>) -> Result<Vec<LabelSequence>> {
    let path = path.as_ref();
    let seqs: Vec<LabelSequence> = read_jsonl_file(path)?;
    for (i, s) in seqs.iter().enumerate() {
        if s.tokens.len() != s.labels.len() {
            return Err(Error::parse(
                &path.display().to_string(),
                i + 1,
                format!(
                    "{}: {} labels for {} tokens",
                    s.doc_id,
                    s.labels.len(),
                    s.tokens.len()
                ),
            ));
        }
    }
    Ok(seqs)
}

pub fn write_label_file<W: Write>(out: W, seqs: &[LabelSequence]) -> std::io::Result<()> {
    write_jsonl(out, seqs)
}
