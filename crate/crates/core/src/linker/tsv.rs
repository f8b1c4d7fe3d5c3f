//! Embedding TSV: a `#dim=<d>` header, then rows of
//! `key<TAB>text<TAB>v1 v2 … vd`. Concept tables use the MeSH id and synonym
//! as key and text; query files use a query id and the mention text.

use std::io::{BufRead, Write};

use super::ConceptRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub key: String,
    pub text: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: Vec<EmbeddingRow>,
}

pub fn read_embedding_tsv<R: BufRead>(reader: R, source_name: &str) -> Result<EmbeddingTable> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::parse(source_name, 1, e.to_string()))?,
        None => return Err(Error::parse(source_name, 1, "missing #dim=<d> header")),
    };
    let dim: usize = header
        .trim_end()
        .strip_prefix("#dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| {
            Error::parse(
                source_name,
                1,
                format!("expected #dim=<d> header, found {header:?}"),
            )
        })?;

    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [key, text, values] = cols[..] else {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        };
        if key.is_empty() {
            return Err(Error::parse(source_name, line_no, "empty key column"));
        }
        let vector = values
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| {
                Error::parse(
                    source_name,
                    line_no,
                    "vector holds a non-numeric or non-finite value",
                )
            })?;
        if vector.len() != dim {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("vector has {} values, header says {dim}", vector.len()),
            ));
        }
        rows.push(EmbeddingRow {
            key: key.to_string(),
            text: text.to_string(),
            vector,
        });
    }
    Ok(EmbeddingTable { dim, rows })
}

pub fn write_embedding_tsv<W: Write>(mut out: W, table: &EmbeddingTable) -> std::io::Result<()> {
    writeln!(out, "#dim={}", table.dim)?;
    for row in &table.rows {
        write!(out, "{}\t{}\t", row.key, row.text)?;
        for (i, v) in row.vector.iter().enumerate() {
            if i > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups rows by MeSH id in order of first appearance. The first synonym of
/// each concept becomes its name.
pub fn records_from_rows(rows: &[EmbeddingRow]) -> Vec<ConceptRecord> {
    let mut records: Vec<ConceptRecord> = Vec::new();
    let mut slot = std::collections::HashMap::new();
    for row in rows {
        let i = *slot.entry(row.key.as_str()).or_insert_with(|| {
            records.push(ConceptRecord {
                mesh_id: row.key.clone(),
                name: row.text.clone(),
                synonyms: Vec::new(),
                embeddings: Vec::new(),
            });
            records.len() - 1
        });
        records[i].synonyms.push(row.text.clone());
        records[i]
            .embeddings
            .push(row.vector.iter().map(|&x| x as f32).collect());
    }
    records
}
