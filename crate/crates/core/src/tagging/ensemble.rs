use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Tag, TokenSpan};
use crate::error::{Error, Result};

/// Allowed deviation of a probability row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Per-token label distribution emitted by an external tagger for one
/// document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProbMatrix {
    pub doc_id: String,
    pub labels: Vec<String>,
    pub tokens: Vec<TokenSpan>,
    pub probs: Vec<Vec<f64>>,
}

impl TokenProbMatrix {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidMatrix {
            doc_id: self.doc_id.clone(),
            reason,
        };

        if self.labels.first().map(String::as_str) != Some("O") {
            return Err(invalid("label 0 must be \"O\"".into()));
        }
        let mut seen = HashSet::new();
        let mut begins = HashSet::new();
        let mut insides = HashSet::new();
        for label in &self.labels {
            if !seen.insert(label) {
                return Err(invalid(format!("duplicate label {label:?}")));
            }
            match label.parse::<Tag>().map_err(|e| invalid(e.to_string()))? {
                Tag::Outside => {}
                Tag::Begin(t) => {
                    begins.insert(t);
                }
                Tag::Inside(t) => {
                    insides.insert(t);
                }
            }
        }
        if begins != insides {
            return Err(invalid(
                "every entity type needs both a B- and an I- label".into(),
            ));
        }

        for (i, t) in self.tokens.iter().enumerate() {
            if t.length == 0 {
                return Err(invalid(format!("token {i} has zero length")));
            }
            if i > 0 && t.start < self.tokens[i - 1].end() {
                return Err(invalid(format!(
                    "token {i} overlaps or precedes token {}",
                    i - 1
                )));
            }
        }

        if self.probs.len() != self.tokens.len() {
            return Err(invalid(format!(
                "{} probability rows for {} tokens",
                self.probs.len(),
                self.tokens.len()
            )));
        }
        for (r, row) in self.probs.iter().enumerate() {
            if row.len() != self.labels.len() {
                return Err(invalid(format!(
                    "row {r} has {} columns, expected {}",
                    row.len(),
                    self.labels.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(invalid(format!("row {r} has entry {p} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(invalid(format!("row {r} sums to {sum}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub model_id: String,
    pub weight: f64,
}

/// Ensemble members with weights normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    members: Vec<EnsembleMember>,
}

impl EnsembleSpec {
    pub fn new(members: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let members: Vec<_> = members.into_iter().collect();
        if members.is_empty() {
            return Err(Error::InvalidEnsemble("no members".into()));
        }
        let mut ids = HashSet::new();
        for (id, w) in &members {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidEnsemble(format!(
                    "model {id}: weight {w} is not positive"
                )));
            }
            if !ids.insert(id.as_str()) {
                return Err(Error::InvalidEnsemble(format!("duplicate model id {id}")));
            }
        }
        let total: f64 = members.iter().map(|(_, w)| w).sum();
        Ok(EnsembleSpec {
            members: members
                .into_iter()
                .map(|(model_id, w)| EnsembleMember {
                    model_id,
                    weight: w / total,
                })
                .collect(),
        })
    }

    pub fn uniform(ids: impl IntoIterator<Item = String>) -> Result<Self> {
        Self::new(ids.into_iter().map(|id| (id, 1.0)))
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }
}

/// Weighted average of member probability rows. `matrices[i]` belongs to
/// `spec.members()[i]`.
pub fn ensemble_probs(
    matrices: &[TokenProbMatrix],
    spec: &EnsembleSpec,
) -> Result<TokenProbMatrix> {
    let members = spec.members();
    if matrices.len() != members.len() {
        return Err(Error::InvalidEnsemble(format!(
            "{} matrices for {} members",
            matrices.len(),
            members.len()
        )));
    }
    let reference = &matrices[0];
    for (m, member) in matrices.iter().zip(members) {
        let mismatch = |reason: String| Error::EnsembleMismatch {
            model_id: member.model_id.clone(),
            reason,
        };
        m.validate().map_err(|e| mismatch(e.to_string()))?;
        if m.doc_id != reference.doc_id {
            return Err(mismatch(format!(
                "doc_id {} differs from {}",
                m.doc_id, reference.doc_id
            )));
        }
        if m.labels != reference.labels {
            return Err(mismatch("label vocabulary differs".into()));
        }
        if m.tokens != reference.tokens {
            return Err(mismatch(format!(
                "tokenization differs ({} vs {} tokens)",
                m.tokens.len(),
                reference.tokens.len()
            )));
        }
    }

    let mut probs = vec![vec![0.0; reference.labels.len()]; reference.tokens.len()];
    for (m, member) in matrices.iter().zip(members) {
        for (acc_row, row) in probs.iter_mut().zip(&m.probs) {
            for (acc, p) in acc_row.iter_mut().zip(row) {
                *acc += member.weight * p;
            }
        }
    }

    Ok(TokenProbMatrix {
        doc_id: reference.doc_id.clone(),
        labels: reference.labels.clone(),
        tokens: reference.tokens.clone(),
        probs,
    })
}

/// Most probable label per token; exact ties go to the lowest label index.
pub fn argmax_decode(matrix: &TokenProbMatrix) -> Result<Vec<Tag>> {
    let labels: Vec<Tag> = matrix
        .labels
        .iter()
        .map(|l| l.parse())
        .collect::<Result<_>>()?;
    matrix
        .probs
        .iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, f64)>, (i, &p)| match best {
                    Some((_, bp)) if p <= bp => best,
                    _ => Some((i, p)),
                })
                .map(|(i, _)| i)
                .ok_or_else(|| Error::InvalidMatrix {
                    doc_id: matrix.doc_id.clone(),
                    reason: "empty probability row".into(),
                })?;
            labels
                .get(best)
                .cloned()
                .ok_or_else(|| Error::InvalidMatrix {
                    doc_id: matrix.doc_id.clone(),
                    reason: "row longer than label vocabulary".into(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> TokenProbMatrix {
        TokenProbMatrix {
            doc_id: "d1".into(),
            labels: vec!["O".into(), "B-Chemical".into(), "I-Chemical".into()],
            tokens: (0..rows.len()).map(|i| TokenSpan::new(i * 2, 1)).collect(),
            probs: rows,
        }
    }

    #[test]
    fn identity_ensemble_is_exact() {
        let m = matrix(vec![vec![0.1, 0.7, 0.2], vec![0.3, 0.3, 0.4]]);
        let spec = EnsembleSpec::new([("m1".to_string(), 1.0)]).unwrap();
        assert_eq!(ensemble_probs(std::slice::from_ref(&m), &spec).unwrap(), m);
    }

    #[test]
    fn equal_weights_average() {
        let a = matrix(vec![vec![1.0, 0.0, 0.0]]);
        let b = matrix(vec![vec![0.0, 1.0, 0.0]]);
        let spec = EnsembleSpec::new([("a".to_string(), 0.5), ("b".to_string(), 0.5)]).unwrap();
        assert_eq!(
            ensemble_probs(&[a, b], &spec).unwrap().probs,
            vec![vec![0.5, 0.5, 0.0]]
        );
    }

    #[test]
    fn token_count_mismatch_names_model() {
        let a = matrix(vec![vec![1.0, 0.0, 0.0]]);
        let b = matrix(vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let spec = EnsembleSpec::uniform(["a".to_string(), "b".to_string()]).unwrap();
        let err = ensemble_probs(&[a, b], &spec).unwrap_err();
        assert!(
            matches!(&err, Error::EnsembleMismatch { model_id, .. } if model_id == "b"),
            "{err}"
        );
    }

    #[test]
    fn spec_normalizes_and_rejects_bad_weights() {
        let spec = EnsembleSpec::new([("a".to_string(), 3.0), ("b".to_string(), 1.0)]).unwrap();
        assert_eq!(spec.members()[0].weight, 0.75);
        assert!(EnsembleSpec::new([("a".to_string(), 0.0)]).is_err());
        assert!(EnsembleSpec::new(Vec::<(String, f64)>::new()).is_err());
        assert!(EnsembleSpec::new([("a".to_string(), 1.0), ("a".to_string(), 1.0)]).is_err());
    }

    #[test]
    fn argmax_ties_go_to_outside() {
        let m = matrix(vec![
            vec![0.1, 0.8, 0.1],
            vec![0.4, 0.4, 0.2],
            vec![0.2, 0.4, 0.4],
        ]);
        assert_eq!(
            argmax_decode(&m).unwrap(),
            vec![
                Tag::Begin("Chemical".into()),
                Tag::Outside,
                Tag::Begin("Chemical".into())
            ]
        );
        assert!(argmax_decode(&matrix(vec![])).unwrap().is_empty());
    }

    #[test]
    fn validation_catches_bad_rows() {
        assert!(matrix(vec![vec![0.5, 0.6, 0.0]]).validate().is_err());
        assert!(matrix(vec![vec![0.5, 0.5]]).validate().is_err());
        let mut m = matrix(vec![vec![1.0, 0.0, 0.0]]);
        m.labels[0] = "B-Chemical".into();
        assert!(m.validate().is_err());
        let mut m = matrix(vec![vec![1.0, 0.0, 0.0]]);
        m.labels[2] = "I-Gene".into();
        assert!(m.validate().is_err());
    }
}
