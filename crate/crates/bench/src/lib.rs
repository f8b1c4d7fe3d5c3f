//! Seeded synthetic inputs for the benchmarks.

use chemlink::tagging::TokenProbMatrix;
use chemlink::{ConceptIndex, ConceptRecord, Span, TokenSpan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `entries` random vectors of `dim` components, three synonyms per concept.
pub fn concept_index(entries: usize, dim: usize, seed: u64) -> ConceptIndex {
    let mut rng = rng(seed);
    let records: Vec<ConceptRecord> = (0..entries.div_ceil(3))
        .map(|c| {
            let n = 3.min(entries - 3 * c);
            ConceptRecord {
                mesh_id: format!("D{c:06}"),
                name: format!("concept {c}"),
                synonyms: (0..n).map(|s| format!("concept {c} synonym {s}")).collect(),
                embeddings: (0..n).map(|_| random_vector(&mut rng, dim)).collect(),
            }
        })
        .collect();
    ConceptIndex::build(&records).expect("random vectors are non-zero")
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Gold spans over a document of `len` characters and noisy predictions
/// around them.
pub fn span_sets(count: usize, len: usize, seed: u64) -> (Vec<Span>, Vec<Span>) {
    let mut rng = rng(seed);
    let gold: Vec<Span> = (0..count)
        .map(|_| {
            Span::new(
                rng.random_range(0..len - 20),
                rng.random_range(3..20),
                "Chemical",
            )
        })
        .collect();
    let pred = gold
        .iter()
        .map(|g| Span::new(g.start + rng.random_range(0..3), g.length, "Chemical"))
        .collect();
    (pred, gold)
}

/// Abstract-like text with abbreviations, decimals and initials.
pub fn abstract_text(sentences: usize) -> String {
    const PARTS: [&str; 4] = [
        "Serum levels of lithium rose by 2.5 mg/L vs. baseline (Fig. 3).",
        "Dr. Smith et al. reported similar effects in 12 patients.",
        "No change was seen with e.g. saline or J. Doe's protocol!",
        "Was cisplatin the cause?",
    ];
    (0..sentences)
        .map(|i| PARTS[i % PARTS.len()])
        .collect::<Vec<_>>()
        .join(" ")
}

/// `models` probability matrices over the same `tokens` tokens.
pub fn prob_matrices(models: usize, tokens: usize, seed: u64) -> Vec<TokenProbMatrix> {
    let mut rng = rng(seed);
    let labels: Vec<String> = ["O", "B-Chemical", "I-Chemical"].map(String::from).to_vec();
    let spans: Vec<TokenSpan> = (0..tokens).map(|i| TokenSpan::new(i * 6, 5)).collect();
    (0..models)
        .map(|_| TokenProbMatrix {
            doc_id: "bench".into(),
            labels: labels.clone(),
            tokens: spans.clone(),
            probs: (0..tokens)
                .map(|_| {
                    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / s).collect()
                })
                .collect(),
        })
        .collect()
}
