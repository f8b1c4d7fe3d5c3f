mod common;

use std::fs;

use common::{perfect_answers, run, write_fixtures};
use serde_json::Value;

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("stdout is JSON")
}

fn lines(path: &std::path::Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn validate_accepts_fixture_and_rejects_bad_offsets() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    let out = run(&dir, &["validate", "gold.jsonl"], 0);
    let report = json(&out.stdout);
    assert_eq!(report["documents"], 3);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);

    let bad = fs::read_to_string(dir.join("gold.jsonl"))
        .unwrap()
        .replacen("\"start\":0", "\"start\":1", 1);
    fs::write(dir.join("bad.jsonl"), bad).unwrap();
    let out = run(&dir, &["validate", "bad.jsonl"], 1);
    let report = json(&out.stdout);
    assert_eq!(report["violations"][0]["doc_id"], "1001");
    assert_eq!(report["violations"][0]["annotation"], 0);
}

#[test]
fn strict_reading_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    let extra = fs::read_to_string(dir.join("gold.jsonl"))
        .unwrap()
        .replacen("{\"doc_id\"", "{\"pmid\":1,\"doc_id\"", 1);
    fs::write(dir.join("extra.jsonl"), extra).unwrap();
    run(&dir, &["validate", "extra.jsonl"], 0);
    let out = run(&dir, &["validate", "--strict", "extra.jsonl"], 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pmid"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["eval-ner", "only-one.jsonl"], 2);
    run(tmp.path(), &["no-such-command"], 2);
}

#[test]
fn missing_input_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["split", "absent.jsonl"], 1);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn eval_ner_of_gold_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    for mode in ["strict", "approximate"] {
        let report = json(
            &run(
                &dir,
                &["eval-ner", "--mode", mode, "gold.jsonl", "gold.jsonl"],
                0,
            )
            .stdout,
        );
        assert_eq!(report["f1"], 1.0);
        assert_eq!(report["counts"]["tp"], 12);
        assert_eq!(report["mode"], mode);
    }
    let report = json(&run(&dir, &["eval-link", "gold.jsonl", "gold.jsonl"], 0).stdout);
    assert_eq!(report["task"], "linking");
    assert_eq!(report["f1"], 1.0);
}

#[test]
fn encode_then_decode_reproduces_gold_spans() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &[
            "encode",
            "gold.jsonl",
            "--tokens",
            "tokens.jsonl",
            "-o",
            "labels.jsonl",
        ],
        0,
    );
    let labels = lines(&dir.join("labels.jsonl"));
    assert_eq!(labels[0]["labels"][0], "B-Chemical");
    run(
        &dir,
        &[
            "decode",
            "labels.jsonl",
            "--corpus",
            "gold.jsonl",
            "-o",
            "pred.jsonl",
        ],
        0,
    );
    let report = json(&run(&dir, &["eval-ner", "pred.jsonl", "gold.jsonl"], 0).stdout);
    assert_eq!(report["f1"], 1.0);

    // argmax of the probability fixture also lands on the gold labels
    run(
        &dir,
        &[
            "decode",
            "m1.jsonl",
            "--corpus",
            "gold.jsonl",
            "-o",
            "pred-probs.jsonl",
        ],
        0,
    );
    assert_eq!(
        fs::read(dir.join("pred.jsonl")).unwrap(),
        fs::read(dir.join("pred-probs.jsonl")).unwrap()
    );
}

#[test]
fn single_member_ensemble_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &["ensemble", "--weights", "1.0", "m1.jsonl", "-o", "e.jsonl"],
        0,
    );
    assert_eq!(
        fs::read(dir.join("m1.jsonl")).unwrap(),
        fs::read(dir.join("e.jsonl")).unwrap()
    );
}

#[test]
fn ensemble_weights_shift_the_average() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &[
            "ensemble",
            "--weights",
            "3,1",
            "m1.jsonl",
            "m2.jsonl",
            "-o",
            "e.jsonl",
        ],
        0,
    );
    let e = lines(&dir.join("e.jsonl"));
    // first token: m1 puts 0.8 on gold, m2 puts 0.3
    let p = e[0]["probs"][0][1].as_f64().unwrap();
    assert!((p - (0.75 * 0.8 + 0.25 * 0.3)).abs() < 1e-12, "{p}");

    let out = run(
        &dir,
        &["ensemble", "--weights", "1", "m1.jsonl", "m2.jsonl"],
        1,
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 weights for 2 inputs"));
    run(&dir, &["ensemble", "m1.jsonl", "m1.jsonl"], 1);
}

#[test]
fn link_on_axis_index_returns_both_concepts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    let out = run(
        &dir,
        &["link", "--index", "axes.tsv", "axis-query.tsv", "--k", "2"],
        0,
    );
    let result: Value = serde_json::from_slice(&out.stdout).unwrap();
    let top: Vec<(String, f64)> = result["top_k"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| {
            (
                n["mesh_id"].as_str().unwrap().to_string(),
                n["score"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(top, vec![("A".to_string(), 1.0), ("B".to_string(), 0.0)]);
    assert_eq!(result["linked_id"], "A");
}

#[test]
fn link_threshold_leaves_weak_mentions_unlinked() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &[
            "link",
            "--index",
            "concepts.tsv",
            "queries.tsv",
            "--k",
            "3",
            "--threshold",
            "0.5",
            "-o",
            "links.jsonl",
        ],
        0,
    );
    let links = lines(&dir.join("links.jsonl"));
    let ids: Vec<&Value> = links.iter().map(|l| &l["linked_id"]).collect();
    assert_eq!(
        ids,
        [
            &Value::from("D008094"),
            &"D002945".into(),
            &"D014635".into(),
            &Value::Null
        ]
    );
}

#[test]
fn refine_writes_table_and_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &[
            "refine",
            "concepts.tsv",
            "--epochs",
            "5",
            "--batch-size",
            "4",
            "--trace",
            "trace.txt",
            "-o",
            "refined.tsv",
        ],
        0,
    );
    let trace: Vec<f64> = fs::read_to_string(dir.join("trace.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(trace.len(), 6);
    assert!(trace[5] <= trace[0]);
    let refined = fs::read_to_string(dir.join("refined.tsv")).unwrap();
    assert!(refined.starts_with("#dim=4\n"));
    assert_eq!(refined.lines().count(), 10);

    // no learning leaves the table as loaded
    run(
        &dir,
        &[
            "refine",
            "concepts.tsv",
            "--learning-rate",
            "0",
            "-o",
            "same.tsv",
        ],
        0,
    );
    let same = fs::read_to_string(dir.join("same.tsv")).unwrap();
    let original = fs::read_to_string(dir.join("concepts.tsv")).unwrap();
    assert_eq!(same, original);
}

#[test]
fn index_build_normalizes_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(&dir, &["index-build", "concepts.tsv", "-o", "unit.tsv"], 0);
    let unit = fs::read_to_string(dir.join("unit.tsv")).unwrap();
    for line in unit.lines().skip(1) {
        let v: Vec<f64> = line
            .split('\t')
            .nth(2)
            .unwrap()
            .split(' ')
            .map(|x| x.parse().unwrap())
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12, "{line}");
    }
    fs::write(dir.join("zero.tsv"), "#dim=2\nA\ta\t0 0\n").unwrap();
    run(&dir, &["index-build", "zero.tsv"], 1);
}

#[test]
fn ner_prompts_round_trip_through_a_perfect_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    for style in ["question", "special-token"] {
        run(
            &dir,
            &[
                "convert",
                "gold.jsonl",
                "--task",
                "ner",
                "--style",
                style,
                "-o",
                "ner.jsonl",
            ],
            0,
        );
        let examples = fs::read_to_string(dir.join("ner.jsonl")).unwrap();
        fs::write(dir.join("answers.jsonl"), perfect_answers(&examples)).unwrap();
        let out = run(
            &dir,
            &[
                "recover",
                "answers.jsonl",
                "gold.jsonl",
                "-o",
                "recovered.jsonl",
            ],
            0,
        );
        let summary = json(&out.stdout);
        assert_eq!(summary["dropped"].as_array().unwrap().len(), 0);

        // recovery knows spans and types but not MeSH ids
        let report = json(&run(&dir, &["eval-ner", "recovered.jsonl", "gold.jsonl"], 0).stdout);
        assert_eq!(report["f1"], 1.0, "{style}");
    }
}

#[test]
fn recover_reports_hallucinated_items() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &["convert", "gold.jsonl", "--task", "ner", "-o", "ner.jsonl"],
        0,
    );
    let examples = fs::read_to_string(dir.join("ner.jsonl")).unwrap();
    let answers = perfect_answers(&examples).replacen(
        "\"answer\":\"Lithium; cisplatin\"",
        "\"answer\":\"Lithium; cisplatin; morphine\"",
        1,
    );
    fs::write(dir.join("answers.jsonl"), answers).unwrap();
    let summary = json(
        &run(
            &dir,
            &["recover", "answers.jsonl", "gold.jsonl", "-o", "r.jsonl"],
            0,
        )
        .stdout,
    );
    assert_eq!(summary["dropped"][0]["item"], "morphine");
    assert_eq!(summary["dropped"][0]["reason"], "not-found");
    assert_eq!(summary["dropped"][0]["doc_id"], "1001");
}

#[test]
fn linking_prompts_carry_mesh_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &[
            "convert",
            "gold.jsonl",
            "--task",
            "linking",
            "-o",
            "link.jsonl",
        ],
        0,
    );
    let ex = lines(&dir.join("link.jsonl"));
    assert_eq!(ex.len(), 12);
    assert_eq!(ex[0]["target"], "D008094");
    assert!(ex[0]["prompt"].as_str().unwrap().contains("\"Lithium\""));
    let out = run(
        &dir,
        &[
            "convert",
            "gold.jsonl",
            "--task",
            "linking",
            "--style",
            "special-token",
        ],
        1,
    );
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn indexing_answers_aggregate_per_document() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(
        &dir,
        &[
            "convert",
            "gold.jsonl",
            "--task",
            "indexing",
            "-o",
            "idx.jsonl",
        ],
        1,
    );
    run(
        &dir,
        &[
            "convert",
            "gold.jsonl",
            "--task",
            "indexing",
            "--topics",
            "topics-gold.jsonl",
            "-o",
            "idx.jsonl",
        ],
        0,
    );
    let examples = fs::read_to_string(dir.join("idx.jsonl")).unwrap();
    fs::write(dir.join("answers.jsonl"), perfect_answers(&examples)).unwrap();
    run(
        &dir,
        &[
            "parse",
            "answers.jsonl",
            "--aggregate",
            "-o",
            "topics.jsonl",
        ],
        0,
    );
    let report = json(
        &run(
            &dir,
            &["eval-index", "topics.jsonl", "topics-gold.jsonl"],
            0,
        )
        .stdout,
    );
    assert_eq!(report["f1"], 1.0);
}

#[test]
fn eval_index_equivalence_makes_matching_approximate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    let strict = json(
        &run(
            &dir,
            &["eval-index", "topics-pred.jsonl", "topics-gold.jsonl"],
            0,
        )
        .stdout,
    );
    assert_eq!(strict["mode"], "strict");
    assert_eq!(
        strict["counts"],
        serde_json::json!({"tp": 3, "fp": 2, "fn": 3})
    );
    let approx = json(
        &run(
            &dir,
            &[
                "eval-index",
                "topics-pred.jsonl",
                "topics-gold.jsonl",
                "--equivalence",
                "equivalence.tsv",
            ],
            0,
        )
        .stdout,
    );
    assert_eq!(approx["mode"], "approximate");
    assert_eq!(approx["counts"]["tp"], 4);
}

#[test]
fn split_guards_abbreviations() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(&dir, &["split", "gold.jsonl", "-o", "sentences.jsonl"], 0);
    let recs = lines(&dir.join("sentences.jsonl"));
    // title + 4 abstract sentences ("vs." does not end one)
    assert_eq!(recs[0]["sentences"].as_array().unwrap().len(), 5);
    // title + 3 abstract sentences ("Fig." does not end one) + keywords
    assert_eq!(recs[1]["sentences"].as_array().unwrap().len(), 5);
    assert_eq!(recs[0]["boundary_conflicts"].as_array().unwrap().len(), 0);
}

#[test]
fn windows_pair_abstract_sentences() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixtures(tmp.path());
    run(&dir, &["windows", "gold.jsonl", "-o", "w.jsonl"], 0);
    let w = lines(&dir.join("w.jsonl"));
    let per_doc = |id: &str| w.iter().filter(|r| r["doc_id"] == id).count();
    assert_eq!(
        (per_doc("1001"), per_doc("1002"), per_doc("1003")),
        (2, 2, 1)
    );
    assert_eq!(
        w[2]["keywords"],
        serde_json::json!(["valproate", "hepatotoxicity", "carnitine"])
    );
}
