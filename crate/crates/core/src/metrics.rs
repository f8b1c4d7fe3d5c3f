//! Strict and approximate precision/recall/F1 for mention spans, linked
//! (span, MeSH id) pairs and document-level topic sets.
//!
//! * strict: a prediction counts only with identical boundaries and type.
//! * approximate: a prediction counts when it overlaps a gold item of the same
//!   type. Pairs are matched one-to-one, greedily, taking candidate pairs in
//!   order of overlap length (descending), then prediction start, then gold
//!   start.
//!
//! Counts are micro-averaged: summed over documents before the ratios are
//! taken.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::hash::Hash;
use std::io::{BufRead, BufReader};
use std::iter::Sum;
use std::ops::Add;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::span::Span;
use crate::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Strict,
    Approximate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MatchCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        MatchCounts { tp, fp, fn_ }
    }

    fn from_matched(matched: usize, predicted: usize, gold: usize) -> Self {
        MatchCounts {
            tp: matched as u64,
            fp: (predicted - matched) as u64,
            fn_: (gold - matched) as u64,
        }
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub mode: MatchMode,
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricReport {
    pub fn new(task: Task, mode: MatchMode, counts: MatchCounts) -> Self {
        let (precision, recall, f1) = prf(counts);
        MetricReport {
            task,
            mode,
            counts,
            precision,
            recall,
            f1,
        }
    }
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1 from counts. Nothing predicted and nothing to
/// find scores 1 on all three; any other zero denominator scores 0.
pub fn prf(c: MatchCounts) -> (f64, f64, f64) {
    let predicted = c.tp + c.fp;
    let gold = c.tp + c.fn_;
    if predicted == 0 && gold == 0 {
        return (1.0, 1.0, 1.0);
    }
    let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let p = ratio(c.tp, predicted);
    let r = ratio(c.tp, gold);
    (p, r, harmonic_f1(p, r))
}

/// One-to-one matching of items that carry a span and a key which must agree
/// exactly (unit for NER, the MeSH id for linking).
fn match_items<K: Eq + Hash>(
    pred: &[(&Span, K)],
    gold: &[(&Span, K)],
    mode: MatchMode,
) -> MatchCounts {
    let matched = match mode {
        MatchMode::Strict => {
            let mut available: HashMap<(&Span, &K), usize> = HashMap::new();
            for (s, k) in gold {
                *available.entry((*s, k)).or_default() += 1;
            }
            pred.iter()
                .filter(|(s, k)| match available.get_mut(&(*s, k)) {
                    Some(n) if *n > 0 => {
                        *n -= 1;
                        true
                    }
                    _ => false,
                })
                .count()
        }
        MatchMode::Approximate => {
            let mut candidates = Vec::new();
            for (pi, (ps, pk)) in pred.iter().enumerate() {
                for (gi, (gs, gk)) in gold.iter().enumerate() {
                    let overlap = ps.overlap(gs);
                    if overlap > 0 && ps.entity_type == gs.entity_type && pk == gk {
                        candidates.push((overlap, pi, gi));
                    }
                }
            }
            candidates.sort_by(|a, b| {
                b.0.cmp(&a.0)
                    .then(pred[a.1].0.start.cmp(&pred[b.1].0.start))
                    .then(gold[a.2].0.start.cmp(&gold[b.2].0.start))
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut pred_used = vec![false; pred.len()];
            let mut gold_used = vec![false; gold.len()];
            let mut matched = 0;
            for (_, pi, gi) in candidates {
                if !pred_used[pi] && !gold_used[gi] {
                    pred_used[pi] = true;
                    gold_used[gi] = true;
                    matched += 1;
                }
            }
            matched
        }
    };
    MatchCounts::from_matched(matched, pred.len(), gold.len())
}

/// Matches predicted spans against gold spans of one document.
pub fn match_spans(pred: &[Span], gold: &[Span], mode: MatchMode) -> MatchCounts {
    let p: Vec<_> = pred.iter().map(|s| (s, ())).collect();
    let g: Vec<_> = gold.iter().map(|s| (s, ())).collect();
    match_items(&p, &g, mode)
}

/// Matches (span, MeSH id) items; an annotation with k ids contributes k
/// items.
pub fn match_links(
    pred: &[(Span, String)],
    gold: &[(Span, String)],
    mode: MatchMode,
) -> MatchCounts {
    let p: Vec<_> = pred.iter().map(|(s, id)| (s, id.as_str())).collect();
    let g: Vec<_> = gold.iter().map(|(s, id)| (s, id.as_str())).collect();
    match_items(&p, &g, mode)
}

fn link_items(doc: &Document) -> Vec<(Span, String)> {
    doc.annotations
        .iter()
        .flat_map(|a| a.mesh_ids.iter().map(move |id| (a.span(), id.clone())))
        .collect()
}

/// Pairs items from both sides by document id. Fails when the id sets differ
/// or an id repeats.
fn pair_by_id<'a, T: Sync>(
    pred: &'a [T],
    gold: &'a [T],
    id: impl Fn(&T) -> &str,
) -> Result<Vec<(&'a T, &'a T)>> {
    let mut by_id: HashMap<&str, &T> = HashMap::new();
    for p in pred {
        if by_id.insert(id(p), p).is_some() {
            return Err(Error::InvalidDocument {
                doc_id: id(p).to_string(),
                reason: "duplicate doc_id in predictions".into(),
            });
        }
    }
    let mut gold_ids = HashSet::new();
    for g in gold {
        if !gold_ids.insert(id(g)) {
            return Err(Error::InvalidDocument {
                doc_id: id(g).to_string(),
                reason: "duplicate doc_id in gold".into(),
            });
        }
    }
    let missing: BTreeSet<String> = gold_ids
        .iter()
        .filter(|g| !by_id.contains_key(*g))
        .map(|s| s.to_string())
        .collect();
    let extra: BTreeSet<String> = by_id
        .keys()
        .filter(|p| !gold_ids.contains(*p))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::DocumentSetMismatch {
            missing: missing.into_iter().collect(),
            extra: extra.into_iter().collect(),
        });
    }
    Ok(gold.iter().map(|g| (by_id[id(g)], g)).collect())
}

/// Micro-averaged mention recognition scores.
pub fn evaluate_ner(pred: &[Document], gold: &[Document], mode: MatchMode) -> Result<MetricReport> {
    let pairs = pair_by_id(pred, gold, |d| &d.doc_id)?;
    let counts = pairs
        .par_iter()
        .map(|(p, g)| {
            let ps: Vec<Span> = p.annotations.iter().map(|a| a.span()).collect();
            let gs: Vec<Span> = g.annotations.iter().map(|a| a.span()).collect();
            match_spans(&ps, &gs, mode)
        })
        .sum();
    Ok(MetricReport::new(Task::Ner, mode, counts))
}

/// Micro-averaged entity-linking scores over (span, MeSH id) items.
pub fn evaluate_linking(
    pred: &[Document],
    gold: &[Document],
    mode: MatchMode,
) -> Result<MetricReport> {
    let pairs = pair_by_id(pred, gold, |d| &d.doc_id)?;
    let counts = pairs
        .par_iter()
        .map(|(p, g)| match_links(&link_items(p), &link_items(g), mode))
        .sum();
    Ok(MetricReport::new(Task::Linking, mode, counts))
}

/// Document-level topic ids, one record per line in indexing JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocTopics {
    pub doc_id: String,
    pub topics: Vec<String>,
}

/// Maps an id to its canonical representative; unmapped ids stand for
/// themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdEquivalence {
    canonical: HashMap<String, String>,
}

impl IdEquivalence {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        IdEquivalence {
            canonical: pairs.into_iter().collect(),
        }
    }

    pub fn canonical<'a>(&'a self, id: &'a str) -> &'a str {
        self.canonical.get(id).map_or(id, String::as_str)
    }

    /// Reads a two-column TSV (`id<TAB>canonical-id`). Blank lines and lines
    /// starting with `#` are skipped.
    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split('\t').collect::<Vec<_>>()[..] {
                [id, canon] if !id.is_empty() && !canon.is_empty() => {
                    pairs.push((id.to_string(), canon.to_string()))
                }
                _ => {
                    return Err(Error::parse(
                        source_name,
                        i + 1,
                        "expected two tab-separated columns",
                    ))
                }
            }
        }
        Ok(Self::new(pairs))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }
}

/// Micro-averaged topic indexing scores. Without an equivalence map ids must
/// match exactly (strict); a map makes the comparison approximate.
pub fn evaluate_indexing(
    pred: &[DocTopics],
    gold: &[DocTopics],
    equivalence: Option<&IdEquivalence>,
) -> Result<MetricReport> {
    let pairs = pair_by_id(pred, gold, |d| &d.doc_id)?;
    let identity = IdEquivalence::default();
    let eq = equivalence.unwrap_or(&identity);
    let counts = pairs
        .iter()
        .map(|(p, g)| {
            let ps: HashSet<&str> = p.topics.iter().map(|t| eq.canonical(t)).collect();
            let gs: HashSet<&str> = g.topics.iter().map(|t| eq.canonical(t)).collect();
            let tp = ps.intersection(&gs).count();
            MatchCounts::from_matched(tp, ps.len(), gs.len())
        })
        .sum();
    let mode = if equivalence.is_some() {
        MatchMode::Approximate
    } else {
        MatchMode::Strict
    };
    Ok(MetricReport::new(Task::Indexing, mode, counts))
}
