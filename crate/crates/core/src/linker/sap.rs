//! Self-alignment refinement of synonym embeddings.
//!
//! A batch is a list of synonym pairs `(anchor, positive)` sharing a concept.
//! Its vectors are addressed in flattened order: pair `i` contributes the
//! anchor at `2i` and the positive at `2i + 1`. For each anchor `a` with
//! positive `p`, every in-batch vector `n` of a different concept with
//! `cos(a, n) > cos(a, p) - margin` is a hard negative. The loss over mined
//! triplets is `sum max(0, cos(a, n) - cos(a, p) + margin)`.
//!
//! Cosines are taken between normalized vectors, and the gradients include the
//! normalization, so raw (unnormalized) vectors may be passed in.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::norm;
use super::tsv::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub concept: String,
}

/// Indices into the flattened batch vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

fn vector(batch: &[PairSample], j: usize) -> &[f64] {
    let pair = &batch[j / 2];
    if j.is_multiple_of(2) {
        &pair.anchor
    } else {
        &pair.positive
    }
}

/// Normalized copies of the batch vectors with their original norms.
fn unit_vectors(batch: &[PairSample]) -> Vec<(Vec<f64>, f64)> {
    (0..batch.len() * 2)
        .map(|j| {
            let v = vector(batch, j);
            let n = norm(v.iter().copied());
            let u = if n > 0.0 {
                v.iter().map(|x| x / n).collect()
            } else {
                vec![0.0; v.len()]
            };
            (u, n)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hard negatives in the batch, ordered by anchor index then negative index.
pub fn mine_hard_triplets(batch: &[PairSample], margin: f64) -> Vec<Triplet> {
    let units = unit_vectors(batch);
    let mut out = Vec::new();
    for (i, pair) in batch.iter().enumerate() {
        let (a, p) = (2 * i, 2 * i + 1);
        let pos_sim = dot(&units[a].0, &units[p].0);
        for (n, (un, _)) in units.iter().enumerate() {
            if batch[n / 2].concept != pair.concept && dot(&units[a].0, un) > pos_sim - margin {
                out.push(Triplet {
                    anchor: a,
                    positive: p,
                    negative: n,
                });
            }
        }
    }
    out
}

/// Hinge loss summed over the given triplets.
pub fn sap_loss(batch: &[PairSample], triplets: &[Triplet], margin: f64) -> f64 {
    triplet_loss_grad(batch, triplets, margin).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SapGradient {
    pub loss: f64,
    pub triplets: Vec<Triplet>,
    /// One gradient per flattened batch vector.
    pub grads: Vec<Vec<f64>>,
}

/// Loss and gradient w.r.t. every raw batch vector for a fixed triplet set.
pub fn triplet_loss_grad(
    batch: &[PairSample],
    triplets: &[Triplet],
    margin: f64,
) -> (f64, Vec<Vec<f64>>) {
    let units = unit_vectors(batch);
    let dim = units.first().map_or(0, |u| u.0.len());
    // gradient w.r.t. the unit vectors first
    let mut du = vec![vec![0.0; dim]; units.len()];
    let mut loss = 0.0;
    for t in triplets {
        let (ua, up, un) = (
            &units[t.anchor].0,
            &units[t.positive].0,
            &units[t.negative].0,
        );
        let hinge = dot(ua, un) - dot(ua, up) + margin;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge;
        for k in 0..dim {
            du[t.anchor][k] += un[k] - up[k];
            du[t.positive][k] -= ua[k];
            du[t.negative][k] += ua[k];
        }
    }

    // through u = v / |v|: dL/dv = (I - u u^T) dL/du / |v|
    let grads = du
        .into_iter()
        .zip(&units)
        .map(|(g, (u, n))| {
            if *n == 0.0 {
                return vec![0.0; dim];
            }
            let radial = dot(u, &g);
            g.iter()
                .zip(u)
                .map(|(gk, uk)| (gk - uk * radial) / n)
                .collect()
        })
        .collect();
    (loss, grads)
}

/// Mines the batch, then differentiates the loss with the mined set held
/// fixed.
pub fn sap_loss_grad(batch: &[PairSample], margin: f64) -> SapGradient {
    let triplets = mine_hard_triplets(batch, margin);
    let (loss, grads) = triplet_loss_grad(batch, &triplets, margin);
    SapGradient {
        loss,
        triplets,
        grads,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            margin: 0.2,
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidRefinement(m.to_string()));
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning rate must be non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub table: EmbeddingTable,
    /// Loss before training followed by the loss after each epoch, each
    /// evaluated over all synonym pairs in [`evaluation_order`] batches.
    pub loss_trace: Vec<f64>,
}

/// All same-concept row pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn synonym_pairs(table: &EmbeddingTable) -> Vec<(usize, usize)> {
    let rows = &table.rows;
    let mut pairs = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if rows[i].key == rows[j].key {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Pairs dealt round-robin across concepts (concepts in order of first
/// appearance), so that fixed-size evaluation batches mix concepts.
pub fn evaluation_order(table: &EmbeddingTable, pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut groups: Vec<(&str, Vec<(usize, usize)>)> = Vec::new();
    for &(i, j) in pairs {
        let key = table.rows[i].key.as_str();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push((i, j)),
            None => groups.push((key, vec![(i, j)])),
        }
    }
    let longest = groups.iter().map(|(_, g)| g.len()).max().unwrap_or(0);
    (0..longest)
        .flat_map(|round| {
            groups
                .iter()
                .filter_map(move |(_, g)| g.get(round).copied())
        })
        .collect()
}

fn make_batch(table: &EmbeddingTable, pairs: &[(usize, usize)]) -> Vec<PairSample> {
    pairs
        .iter()
        .map(|&(i, j)| PairSample {
            anchor: table.rows[i].vector.clone(),
            positive: table.rows[j].vector.clone(),
            concept: table.rows[i].key.clone(),
        })
        .collect()
}

fn evaluate(table: &EmbeddingTable, pairs: &[(usize, usize)], config: &RefineConfig) -> f64 {
    pairs
        .chunks(config.batch_size)
        .map(|chunk| sap_loss_grad(&make_batch(table, chunk), config.margin).loss)
        .sum()
}

/// Gradient descent on the embedding vectors themselves. Each epoch shuffles
/// the synonym pairs with a seeded generator and steps once per batch; rows
/// that receive a gradient are moved and re-normalized.
pub fn refine_embeddings(table: &EmbeddingTable, config: &RefineConfig) -> Result<RefineOutcome> {
    config.validate()?;
    let mut concepts: Vec<&str> = table.rows.iter().map(|r| r.key.as_str()).collect();
    concepts.sort_unstable();
    concepts.dedup();
    if concepts.len() < 2 {
        return Err(Error::InvalidRefinement(format!(
            "need at least 2 concepts, found {}",
            concepts.len()
        )));
    }
    for row in &table.rows {
        if row.vector.len() != table.dim {
            return Err(Error::DimensionMismatch {
                expected: table.dim,
                found: row.vector.len(),
            });
        }
        if norm(row.vector.iter().copied()) == 0.0 {
            return Err(Error::ZeroVector {
                mesh_id: row.key.clone(),
                synonym: row.text.clone(),
            });
        }
    }
    let canonical = evaluation_order(table, &synonym_pairs(table));
    if canonical.is_empty() {
        return Err(Error::InvalidRefinement(
            "no concept has two synonyms".into(),
        ));
    }

    let mut table = table.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = canonical.clone();
    let mut loss_trace = vec![evaluate(&table, &canonical, config)];

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let grad = sap_loss_grad(&make_batch(&table, chunk), config.margin);
            if grad.triplets.is_empty() {
                continue;
            }
            let mut row_grads = vec![None::<Vec<f64>>; table.rows.len()];
            for (slot, g) in grad.grads.iter().enumerate() {
                let (i, j) = chunk[slot / 2];
                let row = if slot % 2 == 0 { i } else { j };
                let acc = row_grads[row].get_or_insert_with(|| vec![0.0; table.dim]);
                for (a, x) in acc.iter_mut().zip(g) {
                    *a += x;
                }
            }
            for (row, g) in table.rows.iter_mut().zip(row_grads) {
                let Some(g) = g else { continue };
                if config.learning_rate == 0.0 || g.iter().all(|&x| x == 0.0) {
                    continue;
                }
                for (v, x) in row.vector.iter_mut().zip(&g) {
                    *v -= config.learning_rate * x;
                }
                let n = norm(row.vector.iter().copied());
                for v in &mut row.vector {
                    *v /= n;
                }
            }
        }
        loss_trace.push(evaluate(&table, &canonical, config));
    }
    Ok(RefineOutcome { table, loss_trace })
}
