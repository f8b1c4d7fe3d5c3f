//! Fixture files for exercising the `chemlink` binary.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chemlink::corpus::write_corpus;
use chemlink::tagging::write_prob_file;
use chemlink::{Annotation, Document, Passage, TokenProbMatrix, TokenSpan};
use serde_json::json;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chemlink"))
}

/// Runs the binary inside `dir`, panicking with stderr on an unexpected exit
/// code.
pub fn run(dir: &Path, args: &[&str], expect: i32) -> Output {
    let out = bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn chemlink");
    assert_eq!(
        out.status.code(),
        Some(expect),
        "chemlink {args:?}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Builds a contiguous document from `(section, text)` passages, each but the
/// last followed by one space, and `(surface, mesh ids)` mentions located left
/// to right.
pub fn document(doc_id: &str, passages: &[(&str, &str)], mentions: &[(&str, &[&str])]) -> Document {
    let mut offset = 0;
    let last = passages.len().saturating_sub(1);
    let passages: Vec<Passage> = passages
        .iter()
        .enumerate()
        .map(|(i, (section, text))| {
            let text = if i < last {
                format!("{text} ")
            } else {
                text.to_string()
            };
            let p = Passage {
                section: section.to_string(),
                offset,
                text,
            };
            offset += p.text.chars().count();
            p
        })
        .collect();
    let full: Vec<char> = passages.iter().flat_map(|p| p.text.chars()).collect();
    let mut from = 0;
    let annotations = mentions
        .iter()
        .map(|(surface, mesh)| {
            let needle: Vec<char> = surface.chars().collect();
            let start = (from..=full.len() - needle.len())
                .find(|&i| full[i..i + needle.len()] == needle[..])
                .unwrap_or_else(|| panic!("{surface} not found in {doc_id}"));
            from = start + needle.len();
            Annotation {
                start,
                length: needle.len(),
                surface: surface.to_string(),
                entity_type: "Chemical".into(),
                mesh_ids: mesh.iter().map(|m| m.to_string()).collect(),
            }
        })
        .collect();
    Document {
        doc_id: doc_id.into(),
        passages,
        annotations,
    }
}

pub fn gold_corpus() -> Vec<Document> {
    vec![
        document(
            "1001",
            &[
                ("title", "Lithium toxicity after cisplatin therapy."),
                (
                    "abstract",
                    "Serum lithium rose after two cycles of cisplatin. Renal clearance fell by 40% vs. baseline. \
                     Hydration with saline restored clearance. No effect of ondansetron was seen.",
                ),
            ],
            &[
                ("Lithium", &["D008094"]),
                ("cisplatin", &["D002945"]),
                ("lithium", &["D008094"]),
                ("cisplatin", &["D002945"]),
                ("saline", &["D012965"]),
                ("ondansetron", &["D017294"]),
            ],
        ),
        document(
            "1002",
            &[
                ("title", "Valproic acid and hepatic injury in children."),
                (
                    "abstract",
                    "Valproic acid levels were measured in 52 children. Elevated ammonia was linked to \
                     hepatotoxicity (Fig. 2). Carnitine was given to 12 patients.",
                ),
                ("keywords", "valproate; hepatotoxicity, carnitine"),
            ],
            &[
                ("Valproic acid", &["D014635"]),
                ("Valproic acid", &["D014635"]),
                ("ammonia", &["D000641"]),
                ("Carnitine", &["D002331"]),
                ("valproate", &["D014635"]),
                ("carnitine", &["D002331"]),
            ],
        ),
        document(
            "1003",
            &[("title", "Sleep quality in night-shift nurses."), ("abstract", "No drugs were studied. Sleep was scored weekly.")],
            &[],
        ),
    ]
}

/// Letter/digit runs and single other non-space characters, in document
/// coordinates.
pub fn tokenize(doc: &Document) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p in &doc.passages {
        let chars: Vec<char> = p.text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
            } else if chars[i].is_alphanumeric() {
                let s = i;
                while i < chars.len() && chars[i].is_alphanumeric() {
                    i += 1;
                }
                out.push((p.offset + s, i - s));
            } else {
                out.push((p.offset + i, 1));
                i += 1;
            }
        }
    }
    out
}

fn gold_labels(doc: &Document, tokens: &[(usize, usize)]) -> Vec<usize> {
    tokens
        .iter()
        .map(|&(s, _)| {
            doc.annotations
                .iter()
                .find(|a| a.start <= s && s < a.end())
                .map_or(0, |a| if a.start == s { 1 } else { 2 })
        })
        .collect()
}

/// Token probabilities per document; `noise` moves mass off the gold label on
/// every third token.
fn prob_lines(docs: &[Document], noise: f64) -> Vec<u8> {
    let mut matrices = Vec::new();
    for d in docs {
        let tokens = tokenize(d);
        let probs: Vec<Vec<f64>> = gold_labels(d, &tokens)
            .into_iter()
            .enumerate()
            .map(|(i, gold)| {
                let peak = if i % 3 == 0 { 0.8 - noise } else { 0.8 };
                let rest = (1.0 - peak) / 2.0;
                (0..3)
                    .map(|l| if l == gold { peak } else { rest })
                    .collect()
            })
            .collect();
        matrices.push(TokenProbMatrix {
            doc_id: d.doc_id.clone(),
            labels: ["O", "B-Chemical", "I-Chemical"].map(String::from).to_vec(),
            tokens: tokens.iter().map(|&(s, l)| TokenSpan::new(s, l)).collect(),
            probs,
        });
    }
    let mut out = Vec::new();
    write_prob_file(&mut out, &matrices).unwrap();
    out
}

/// Writes every input fixture into `dir` and returns it.
pub fn write_fixtures(dir: &Path) -> PathBuf {
    let docs = gold_corpus();
    let mut corpus = Vec::new();
    write_corpus(&mut corpus, &docs).unwrap();
    fs::write(dir.join("gold.jsonl"), corpus).unwrap();

    let tokens: String = docs
        .iter()
        .map(|d| {
            let toks: Vec<_> = tokenize(d)
                .iter()
                .map(|&(s, l)| json!({"start": s, "length": l}))
                .collect();
            json!({"doc_id": d.doc_id, "tokens": toks}).to_string() + "\n"
        })
        .collect();
    fs::write(dir.join("tokens.jsonl"), tokens).unwrap();
    fs::write(dir.join("m1.jsonl"), prob_lines(&docs, 0.0)).unwrap();
    fs::write(dir.join("m2.jsonl"), prob_lines(&docs, 0.5)).unwrap();

    fs::write(
        dir.join("concepts.tsv"),
        "#dim=4\n\
         D008094\tlithium\t0.9 0.1 0 0\n\
         D008094\tLi\t0.8 0.3 0 0.1\n\
         D008094\tlithium carbonate\t0.7 0.2 0.1 0\n\
         D002945\tcisplatin\t0 0.9 0.2 0\n\
         D002945\tcis-diamminedichloroplatinum\t0.1 0.8 0.3 0\n\
         D002945\tCDDP\t0.2 0.7 0 0.2\n\
         D014635\tvalproic acid\t0 0 1 0.1\n\
         D014635\tvalproate\t0.1 0.2 0.9 0\n\
         D014635\tVPA\t0 0.3 0.8 0.2\n",
    )
    .unwrap();
    fs::write(
        dir.join("queries.tsv"),
        "#dim=4\n\
         q1\tLithium\t0.85 0.2 0 0\n\
         q2\tcisplatin\t0.05 0.85 0.25 0\n\
         q3\tsodium valproate\t0.05 0.1 0.95 0.05\n\
         q4\tunrelated\t0 0 0 1\n",
    )
    .unwrap();
    fs::write(
        dir.join("axes.tsv"),
        "#dim=2\nA\talpha\t1 0\nB\tbeta\t0 1\n",
    )
    .unwrap();
    fs::write(dir.join("axis-query.tsv"), "#dim=2\nq\talpha-like\t2 0\n").unwrap();

    fs::write(
        dir.join("topics-gold.jsonl"),
        "{\"doc_id\":\"1001\",\"topics\":[\"D008094\",\"D002945\",\"D006801\"]}\n\
         {\"doc_id\":\"1002\",\"topics\":[\"D014635\",\"D056486\"]}\n\
         {\"doc_id\":\"1003\",\"topics\":[\"D012890\"]}\n",
    )
    .unwrap();
    fs::write(
        dir.join("topics-pred.jsonl"),
        "{\"doc_id\":\"1001\",\"topics\":[\"D008094\",\"D002945\"]}\n\
         {\"doc_id\":\"1002\",\"topics\":[\"D014635\",\"D000641\"]}\n\
         {\"doc_id\":\"1003\",\"topics\":[\"D012891\"]}\n",
    )
    .unwrap();
    fs::write(
        dir.join("equivalence.tsv"),
        "# id\tcanonical\nD012891\tD012890\n",
    )
    .unwrap();
    dir.to_path_buf()
}

/// Turns prompt examples into answers of a generator that reproduces every
/// target verbatim.
pub fn perfect_answers(examples_jsonl: &str) -> String {
    examples_jsonl
        .lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            let obj = v.as_object_mut().unwrap();
            let target = obj.remove("target").unwrap();
            obj.insert("answer".into(), target);
            v.to_string() + "\n"
        })
        .collect()
}
