//! MeSH concept embedding index with exact cosine nearest-neighbor linking,
//! and self-alignment refinement of the embedding table.
//!
//! Search is an exhaustive scan over unit-normalized vectors, so results are
//! exact. Ranking is by score (descending), then `mesh_id` (ascending), then
//! load order.

mod sap;
mod tsv;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sap::{
    evaluation_order, mine_hard_triplets, refine_embeddings, sap_loss, sap_loss_grad,
    synonym_pairs, triplet_loss_grad, PairSample, RefineConfig, RefineOutcome, SapGradient,
    Triplet,
};
pub use tsv::{
    read_embedding_tsv, records_from_rows, write_embedding_tsv, EmbeddingRow, EmbeddingTable,
};

/// One concept with an embedding per synonym.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptRecord {
    pub mesh_id: String,
    pub name: String,
    pub synonyms: Vec<String>,
    pub embeddings: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub mesh_id: String,
    pub synonym: String,
}

#[derive(Debug, Clone)]
pub struct ConceptIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    // row-major, one unit vector per entry
    vectors: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub mesh_id: String,
    pub synonym: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub query_id: String,
    pub mention: String,
    pub top_k: Vec<Neighbor>,
    pub linked_id: Option<String>,
}

pub(crate) fn norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl ConceptIndex {
    /// Builds an index from concept records, normalizing every vector.
    pub fn build(records: &[ConceptRecord]) -> Result<Self> {
        let dim = records
            .iter()
            .flat_map(|r| r.embeddings.first())
            .map(Vec::len)
            .next()
            .unwrap_or(0);
        let mut index = ConceptIndex {
            dim,
            entries: Vec::new(),
            vectors: Vec::new(),
        };
        let mut seen = HashSet::new();
        for r in records {
            if r.synonyms.len() != r.embeddings.len() {
                return Err(Error::InvalidRecord {
                    mesh_id: r.mesh_id.clone(),
                    reason: format!(
                        "{} synonyms but {} embeddings",
                        r.synonyms.len(),
                        r.embeddings.len()
                    ),
                });
            }
            for (syn, v) in r.synonyms.iter().zip(&r.embeddings) {
                if !seen.insert((r.mesh_id.as_str(), syn.as_str())) {
                    return Err(Error::DuplicateEntry {
                        mesh_id: r.mesh_id.clone(),
                        synonym: syn.clone(),
                    });
                }
                index.push(&r.mesh_id, syn, v)?;
            }
        }
        if index.dim == 0 && !index.entries.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        Ok(index)
    }

    fn push(&mut self, mesh_id: &str, synonym: &str, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let n = norm(v.iter().map(|&x| x as f64));
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector {
                mesh_id: mesh_id.to_string(),
                synonym: synonym.to_string(),
            });
        }
        self.vectors
            .extend(v.iter().map(|&x| (x as f64 / n) as f32));
        self.entries.push(IndexEntry {
            mesh_id: mesh_id.to_string(),
            synonym: synonym.to_string(),
        });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn unit_query(&self, query: &[f32]) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let n = norm(query.iter().map(|&x| x as f64));
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidQuery(
                "zero or non-finite query vector".into(),
            ));
        }
        Ok(query.iter().map(|&x| x as f64 / n).collect())
    }

    fn rank(&self, a: &(usize, f64), b: &(usize, f64)) -> Ordering {
        b.1.total_cmp(&a.1)
            .then_with(|| self.entries[a.0].mesh_id.cmp(&self.entries[b.0].mesh_id))
            .then(a.0.cmp(&b.0))
    }

    /// The `k` entries with the highest cosine similarity to `query`.
    pub fn nearest(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidQuery("k must be positive".into()));
        }
        let q = self.unit_query(query)?;
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .chunks_exact(self.dim.max(1))
            .map(|v| {
                v.iter()
                    .zip(&q)
                    .map(|(&x, y)| x as f64 * y)
                    .sum::<f64>()
                    .clamp(-1.0, 1.0)
            })
            .enumerate()
            .collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |a, b| self.rank(a, b));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| self.rank(a, b));
        Ok(scored
            .into_iter()
            .map(|(i, score)| Neighbor {
                mesh_id: self.entries[i].mesh_id.clone(),
                synonym: self.entries[i].synonym.clone(),
                score,
            })
            .collect())
    }

    /// Links a mention embedding to its best concept. With `threshold` set, the
    /// top hit must score at least that much to be linked.
    pub fn link_mention(
        &self,
        query_id: &str,
        mention: &str,
        query: &[f32],
        threshold: Option<f64>,
        k: usize,
    ) -> Result<LinkResult> {
        let top_k = self.nearest(query, k)?;
        let linked_id = top_k
            .first()
            .filter(|best| threshold.is_none_or(|t| best.score >= t))
            .map(|best| best.mesh_id.clone());
        Ok(LinkResult {
            query_id: query_id.to_string(),
            mention: mention.to_string(),
            top_k,
            linked_id,
        })
    }
}
