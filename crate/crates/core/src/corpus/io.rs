//! Corpus JSONL: one document per line.
//!
//! ```text
//! {"doc_id": str, "passages": [{"section": str, "offset": int, "text": str}],
//!  "annotations": [{"start": int, "length": int, "text": str, "type": str, "mesh": [str]}]}
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::{validate_document, Annotation, Document, Passage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Reject unknown keys instead of warning about them.
    pub strict: bool,
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: String,
    passages: Vec<RawPassage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Deserialize)]
struct RawPassage {
    section: String,
    offset: usize,
    text: String,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    start: usize,
    length: usize,
    text: String,
    #[serde(rename = "type")]
    entity_type: String,
    #[serde(default)]
    mesh: Vec<String>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

fn check_extra(
    extra: &Map<String, Value>,
    what: &str,
    opts: ReadOptions,
    source_name: &str,
    line: usize,
) -> Result<()> {
    if extra.is_empty() {
        return Ok(());
    }
    let keys: Vec<&str> = extra.keys().map(String::as_str).collect();
    if opts.strict {
        return Err(Error::parse(
            source_name,
            line,
            format!("unknown {what} keys {keys:?}"),
        ));
    }
    log::warn!("{source_name}:{line}: ignoring unknown {what} keys {keys:?}");
    Ok(())
}

fn convert(
    raw: RawDocument,
    opts: ReadOptions,
    source_name: &str,
    line: usize,
) -> Result<Document> {
    check_extra(&raw.extra, "document", opts, source_name, line)?;
    let passages = raw
        .passages
        .into_iter()
        .map(|p| {
            check_extra(&p.extra, "passage", opts, source_name, line)?;
            Ok(Passage {
                section: p.section,
                offset: p.offset,
                text: p.text,
            })
        })
        .collect::<Result<_>>()?;
    let annotations = raw
        .annotations
        .into_iter()
        .map(|a| {
            check_extra(&a.extra, "annotation", opts, source_name, line)?;
            let mut ann = Annotation {
                start: a.start,
                length: a.length,
                surface: a.text,
                entity_type: a.entity_type,
                mesh_ids: a.mesh,
            };
            ann.normalize_mesh();
            Ok(ann)
        })
        .collect::<Result<_>>()?;
    Ok(Document {
        doc_id: raw.doc_id,
        passages,
        annotations,
    })
}

/// Parses documents without validating them. Blank lines are skipped; `-`
/// MeSH placeholders are normalized.
pub fn read_corpus<R: BufRead>(
    reader: R,
    source_name: &str,
    opts: ReadOptions,
) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        docs.push(convert(raw, opts, source_name, line_no)?);
    }
    Ok(docs)
}

/// Reads and validates a corpus file. Fails on the first invalid document or a
/// repeated `doc_id`.
pub fn load_corpus(path: impl AsRef<Path>, opts: ReadOptions) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let docs = read_corpus(BufReader::new(file), &path.display().to_string(), opts)?;

    let mut seen = HashSet::new();
    for doc in &docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::InvalidDocument {
                doc_id: doc.doc_id.clone(),
                reason: "duplicate doc_id".into(),
            });
        }
        let violations = validate_document(doc);
        if !violations.is_empty() {
            let reason = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidDocument {
                doc_id: doc.doc_id.clone(),
                reason,
            });
        }
    }
    Ok(docs)
}

/// Writes documents in canonical form: compact JSON, fixed key order, one
/// document per line, each line terminated by `\n`.
pub fn write_corpus<W: Write>(mut out: W, docs: &[Document]) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
