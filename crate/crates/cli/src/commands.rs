use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use chemlink::corpus::{
    load_corpus, read_corpus, validate_document, write_corpus, ReadOptions, Violation,
};
use chemlink::jsonl::{read_jsonl_file, write_jsonl};
use chemlink::linker::{
    read_embedding_tsv, records_from_rows, refine_embeddings, write_embedding_tsv, EmbeddingTable,
};
use chemlink::metrics::{
    evaluate_indexing, evaluate_linking, evaluate_ner, DocTopics, IdEquivalence,
};
use chemlink::tagging::{
    argmax_decode, decode_spans, encode_bio, ensemble_probs, read_label_file, read_prob_file,
    write_label_file, write_prob_file, DecodeMode, EnsembleSpec, LabelSequence,
};
use chemlink::text2text::{
    aggregate_topics, answer_context, document_windows, linking_examples, make_prompt,
    ner_examples, parse_answer, recover_spans, DroppedItem, GeneratedAnswer, IndexWindow,
    PromptInput, Provenance,
};
use chemlink::{
    Annotation, ConceptIndex, Document, MatchMode, PromptStyle, RefineConfig, Span, Task, TokenSpan,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{CorpusIn, Output, TaskArg};

fn writer(out: &Output) -> anyhow::Result<Box<dyn Write>> {
    Ok(match &out.output {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut w: Box<dyn Write>) -> anyhow::Result<ExitCode> {
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

fn opts(input: &CorpusIn) -> ReadOptions {
    ReadOptions {
        strict: input.strict,
    }
}

fn load(input: &CorpusIn) -> anyhow::Result<Vec<Document>> {
    Ok(load_corpus(&input.corpus, opts(input))?)
}

/// Reads without validating, for predicted corpora that may hold overlapping
/// or otherwise unusual annotations.
fn read_unchecked(path: &Path, opts: ReadOptions) -> anyhow::Result<Vec<Document>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_corpus(
        BufReader::new(file),
        &path.display().to_string(),
        opts,
    )?)
}

fn read_table(path: &Path) -> anyhow::Result<EmbeddingTable> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_embedding_tsv(
        BufReader::new(file),
        &path.display().to_string(),
    )?)
}

#[derive(Serialize)]
struct DocViolation {
    doc_id: String,
    #[serde(flatten)]
    violation: Violation,
}

#[derive(Serialize)]
struct ValidationReport {
    documents: usize,
    annotations: usize,
    duplicate_doc_ids: Vec<String>,
    violations: Vec<DocViolation>,
}

pub fn validate(input: &CorpusIn) -> anyhow::Result<ExitCode> {
    let docs = read_unchecked(&input.corpus, opts(input))?;
    let mut seen = HashMap::new();
    let mut duplicate_doc_ids = Vec::new();
    for d in &docs {
        if seen.insert(d.doc_id.as_str(), ()).is_some() {
            duplicate_doc_ids.push(d.doc_id.clone());
        }
    }
    let violations: Vec<DocViolation> = docs
        .iter()
        .flat_map(|d| {
            validate_document(d)
                .into_iter()
                .map(|violation| DocViolation {
                    doc_id: d.doc_id.clone(),
                    violation,
                })
        })
        .collect();
    let report = ValidationReport {
        documents: docs.len(),
        annotations: docs.iter().map(|d| d.annotations.len()).sum(),
        duplicate_doc_ids,
        violations,
    };
    print_json(&report)?;
    let clean = report.violations.is_empty() && report.duplicate_doc_ids.is_empty();
    Ok(if clean {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    doc_id: &'a str,
    abbreviations_version: &'static str,
    sentences: Vec<chemlink::SentenceSpan>,
    /// Indices of annotations that cross a sentence boundary.
    boundary_conflicts: Vec<usize>,
}

pub fn split(input: &CorpusIn, out: &Output) -> anyhow::Result<ExitCode> {
    let docs = load(input)?;
    let records: Vec<SplitRecord> = docs
        .par_iter()
        .map(|d| {
            let projection = d.project_annotations();
            SplitRecord {
                doc_id: &d.doc_id,
                abbreviations_version: chemlink::corpus::ABBREVIATIONS_VERSION,
                sentences: projection.sentences,
                boundary_conflicts: projection.conflicts,
            }
        })
        .collect();
    let conflicts: usize = records.iter().map(|r| r.boundary_conflicts.len()).sum();
    if conflicts > 0 {
        log::warn!("{conflicts} annotation(s) cross a sentence boundary");
    }
    let mut w = writer(out)?;
    write_jsonl(&mut w, &records)?;
    finish(w)
}

#[derive(Deserialize)]
struct DocTokens {
    doc_id: String,
    tokens: Vec<TokenSpan>,
}

pub fn encode(input: &CorpusIn, tokens: &Path, out: &Output) -> anyhow::Result<ExitCode> {
    let docs = load(input)?;
    let token_docs: Vec<DocTokens> = read_jsonl_file(tokens)?;
    let mut by_id: HashMap<String, Vec<TokenSpan>> = HashMap::new();
    for t in token_docs {
        let id = t.doc_id.clone();
        if by_id.insert(t.doc_id, t.tokens).is_some() {
            bail!("{}: duplicate doc_id {id}", tokens.display());
        }
    }
    let seqs = docs
        .iter()
        .map(|d| {
            let toks = by_id
                .remove(&d.doc_id)
                .ok_or_else(|| anyhow!("no tokens for document {}", d.doc_id))?;
            let spans: Vec<Span> = d.annotations.iter().map(Annotation::span).collect();
            let labels =
                encode_bio(&toks, &spans).with_context(|| format!("document {}", d.doc_id))?;
            Ok(LabelSequence {
                doc_id: d.doc_id.clone(),
                tokens: toks,
                labels,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if !by_id.is_empty() {
        let mut extra: Vec<_> = by_id.into_keys().collect();
        extra.sort();
        log::warn!(
            "tokens for documents not in the corpus: {}",
            extra.join(", ")
        );
    }
    let mut w = writer(out)?;
    write_label_file(&mut w, &seqs)?;
    finish(w)
}

fn has_probs(path: &Path) -> anyhow::Result<bool> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .with_context(|| format!("{}: first record is not JSON", path.display()))?;
        return Ok(value.get("probs").is_some());
    }
    Ok(false)
}

pub fn decode(input: &Path, corpus: &Path, strict: bool, out: &Output) -> anyhow::Result<ExitCode> {
    let mode = if strict {
        DecodeMode::Strict
    } else {
        DecodeMode::Lenient
    };
    let seqs: Vec<LabelSequence> = if has_probs(input)? {
        read_prob_file(input)?
            .into_iter()
            .map(|m| {
                let labels = argmax_decode(&m)?;
                Ok(LabelSequence {
                    doc_id: m.doc_id,
                    tokens: m.tokens,
                    labels,
                })
            })
            .collect::<chemlink::Result<_>>()?
    } else {
        read_label_file(input)?
    };
    let docs = load_corpus(corpus, ReadOptions::default())?;
    let mut by_id: HashMap<&str, &LabelSequence> = HashMap::new();
    for s in &seqs {
        if by_id.insert(&s.doc_id, s).is_some() {
            bail!("{}: duplicate doc_id {}", input.display(), s.doc_id);
        }
    }

    let predicted = docs
        .iter()
        .filter_map(|d| {
            let Some(seq) = by_id.get(d.doc_id.as_str()) else {
                log::warn!("no labels for document {}; skipped", d.doc_id);
                return None;
            };
            Some(predict_doc(d, seq, mode))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut w = writer(out)?;
    write_corpus(&mut w, &predicted)?;
    finish(w)
}

fn predict_doc(doc: &Document, seq: &LabelSequence, mode: DecodeMode) -> anyhow::Result<Document> {
    let spans = decode_spans(&seq.labels, &seq.tokens, mode)
        .with_context(|| format!("document {}", doc.doc_id))?;
    let annotations = spans
        .into_iter()
        .map(|s| {
            let surface = doc.text_at(s.start, s.length).ok_or_else(|| {
                anyhow!(
                    "document {}: decoded span {}+{} is not inside one passage",
                    doc.doc_id,
                    s.start,
                    s.length
                )
            })?;
            Ok(Annotation {
                start: s.start,
                length: s.length,
                surface: surface.to_string(),
                entity_type: s.entity_type,
                mesh_ids: Vec::new(),
            })
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(Document {
        doc_id: doc.doc_id.clone(),
        passages: doc.passages.clone(),
        annotations,
    })
}

pub fn ensemble(
    inputs: &[std::path::PathBuf],
    weights: Option<Vec<f64>>,
    out: &Output,
) -> anyhow::Result<ExitCode> {
    let ids: Vec<String> = inputs
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| anyhow!("no file name in {}", p.display()))
        })
        .collect::<anyhow::Result<_>>()?;
    let spec = match weights {
        Some(w) if w.len() != ids.len() => bail!("{} weights for {} inputs", w.len(), ids.len()),
        Some(w) => EnsembleSpec::new(ids.iter().cloned().zip(w))?,
        None => EnsembleSpec::uniform(ids.iter().cloned())?,
    };
    let models = inputs
        .iter()
        .map(read_prob_file)
        .collect::<chemlink::Result<Vec<_>>>()?;
    let lookups: Vec<HashMap<&str, &chemlink::TokenProbMatrix>> = models
        .iter()
        .map(|ms| ms.iter().map(|m| (m.doc_id.as_str(), m)).collect())
        .collect();

    let merged = models[0]
        .par_iter()
        .map(|first| {
            let members = lookups
                .iter()
                .zip(&ids)
                .map(|(lookup, id)| {
                    lookup
                        .get(first.doc_id.as_str())
                        .map(|m| (*m).clone())
                        .ok_or_else(|| {
                            anyhow!("model {id} has no probabilities for {}", first.doc_id)
                        })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            Ok(ensemble_probs(&members, &spec)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    for (lookup, id) in lookups.iter().zip(&ids).skip(1) {
        if lookup.len() != merged.len() {
            bail!(
                "model {id} covers {} documents, expected {}",
                lookup.len(),
                merged.len()
            );
        }
    }
    let mut w = writer(out)?;
    write_prob_file(&mut w, &merged)?;
    finish(w)
}

pub fn eval_mentions(
    pred: &Path,
    gold: &Path,
    mode: MatchMode,
    linking: bool,
) -> anyhow::Result<ExitCode> {
    let pred = read_unchecked(pred, ReadOptions::default())?;
    let gold = load_corpus(gold, ReadOptions::default())?;
    let report = if linking {
        evaluate_linking(&pred, &gold, mode)?
    } else {
        evaluate_ner(&pred, &gold, mode)?
    };
    print_json(&report)?;
    Ok(ExitCode::SUCCESS)
}

pub fn eval_index(
    pred: &Path,
    gold: &Path,
    equivalence: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let pred: Vec<DocTopics> = read_jsonl_file(pred)?;
    let gold: Vec<DocTopics> = read_jsonl_file(gold)?;
    let eq = equivalence.map(IdEquivalence::load).transpose()?;
    print_json(&evaluate_indexing(&pred, &gold, eq.as_ref())?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn index_build(embeddings: &Path, out: &Output) -> anyhow::Result<ExitCode> {
    let mut table = read_table(embeddings)?;
    let records = records_from_rows(&table.rows);
    let index = ConceptIndex::build(&records)?;
    log::info!(
        "{} concepts, {} entries, dim {}",
        records.len(),
        index.len(),
        index.dim()
    );
    for row in &mut table.rows {
        let n = row.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.vector.iter_mut().for_each(|x| *x /= n);
    }
    let mut w = writer(out)?;
    write_embedding_tsv(&mut w, &table)?;
    finish(w)
}

pub fn link(
    index: &Path,
    queries: &Path,
    k: usize,
    threshold: Option<f64>,
    out: &Output,
) -> anyhow::Result<ExitCode> {
    let table = read_table(index)?;
    let index = ConceptIndex::build(&records_from_rows(&table.rows))?;
    let queries = read_table(queries)?;
    let results = queries
        .rows
        .par_iter()
        .map(|q| {
            let v: Vec<f32> = q.vector.iter().map(|&x| x as f32).collect();
            index.link_mention(&q.key, &q.text, &v, threshold, k)
        })
        .collect::<chemlink::Result<Vec<_>>>()?;
    let mut w = writer(out)?;
    write_jsonl(&mut w, &results)?;
    finish(w)
}

pub fn refine(
    embeddings: &Path,
    config: &RefineConfig,
    trace: Option<&Path>,
    out: &Output,
) -> anyhow::Result<ExitCode> {
    let table = read_table(embeddings)?;
    let outcome = refine_embeddings(&table, config)?;
    if let (Some(first), Some(last)) = (outcome.loss_trace.first(), outcome.loss_trace.last()) {
        log::info!("loss {first} -> {last}");
    }
    if let Some(path) = trace {
        let mut f = BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        );
        for loss in &outcome.loss_trace {
            writeln!(f, "{loss}")?;
        }
        f.flush()?;
    }
    let mut w = writer(out)?;
    write_embedding_tsv(&mut w, &outcome.table)?;
    finish(w)
}

pub fn convert(
    input: &CorpusIn,
    task: TaskArg,
    style: PromptStyle,
    topics: Option<&Path>,
    out: &Output,
) -> anyhow::Result<ExitCode> {
    let docs = load(input)?;
    let examples: Vec<chemlink::PromptExample> = match task {
        TaskArg::Ner => docs
            .iter()
            .map(|d| ner_examples(d, style))
            .collect::<chemlink::Result<Vec<_>>>()?
            .concat(),
        TaskArg::Linking => {
            let mut all = Vec::new();
            let mut skipped = 0;
            for d in &docs {
                let (examples, conflicts) = linking_examples(d, style)?;
                all.extend(examples);
                skipped += conflicts;
            }
            if skipped > 0 {
                log::warn!("{skipped} mention(s) cross a sentence boundary and were skipped");
            }
            all
        }
        TaskArg::Indexing => {
            let path =
                topics.ok_or_else(|| anyhow!("--topics is required for the indexing task"))?;
            let gold: Vec<DocTopics> = read_jsonl_file(path)?;
            let by_id: HashMap<&str, &[String]> = gold
                .iter()
                .map(|t| (t.doc_id.as_str(), &t.topics[..]))
                .collect();
            let mut all = Vec::new();
            for d in &docs {
                let topics = by_id
                    .get(d.doc_id.as_str())
                    .ok_or_else(|| anyhow!("no topics for document {}", d.doc_id))?;
                for (window, region) in document_windows(d) {
                    all.push(make_prompt(
                        style,
                        PromptInput::Indexing {
                            window: &window,
                            topics,
                        },
                        Provenance {
                            doc_id: &d.doc_id,
                            start: region.start,
                            length: region.length,
                        },
                    )?);
                }
            }
            all
        }
    };
    let mut w = writer(out)?;
    write_jsonl(&mut w, &examples)?;
    finish(w)
}

#[derive(Serialize)]
struct ParsedAnswer<'a> {
    task: Task,
    doc_id: &'a str,
    start: usize,
    length: usize,
    items: Vec<String>,
}

pub fn parse(answers: &Path, aggregate: bool, out: &Output) -> anyhow::Result<ExitCode> {
    let answers: Vec<GeneratedAnswer> = read_jsonl_file(answers)?;
    let mut w = writer(out)?;
    if aggregate {
        // documents in order of first appearance
        let mut order: Vec<&str> = Vec::new();
        let mut windows: HashMap<&str, Vec<Vec<String>>> = HashMap::new();
        for a in &answers {
            if a.task != Task::Indexing {
                bail!(
                    "--aggregate expects indexing answers, found {} for {}",
                    a.task,
                    a.doc_id
                );
            }
            windows
                .entry(&a.doc_id)
                .or_insert_with(|| {
                    order.push(&a.doc_id);
                    Vec::new()
                })
                .push(parse_answer(&a.answer));
        }
        let topics: Vec<DocTopics> = order
            .into_iter()
            .map(|id| DocTopics {
                doc_id: id.to_string(),
                topics: aggregate_topics(&windows[id]),
            })
            .collect();
        write_jsonl(&mut w, &topics)?;
    } else {
        let parsed: Vec<ParsedAnswer> = answers
            .iter()
            .map(|a| ParsedAnswer {
                task: a.task,
                doc_id: &a.doc_id,
                start: a.start,
                length: a.length,
                items: parse_answer(&a.answer),
            })
            .collect();
        write_jsonl(&mut w, &parsed)?;
    }
    finish(w)
}

#[derive(Serialize)]
struct RecoverySummary {
    answers: usize,
    recovered: usize,
    case_fallbacks: usize,
    ambiguous: usize,
    dropped: Vec<DocDrop>,
}

#[derive(Serialize)]
struct DocDrop {
    doc_id: String,
    #[serde(flatten)]
    item: DroppedItem,
}

pub fn recover(
    answers: &Path,
    input: &CorpusIn,
    entity_type: &str,
    out: &Output,
) -> anyhow::Result<ExitCode> {
    let answers: Vec<GeneratedAnswer> = read_jsonl_file(answers)?;
    let docs = load(input)?;
    let index: HashMap<&str, usize> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_id.as_str(), i))
        .collect();
    let mut recovered: Vec<Vec<Annotation>> = vec![Vec::new(); docs.len()];
    let mut summary = RecoverySummary {
        answers: answers.len(),
        recovered: 0,
        case_fallbacks: 0,
        ambiguous: 0,
        dropped: Vec::new(),
    };
    for a in &answers {
        if a.task != Task::Ner {
            bail!(
                "recover expects NER answers, found {} for {}",
                a.task,
                a.doc_id
            );
        }
        let &di = index
            .get(a.doc_id.as_str())
            .ok_or_else(|| anyhow!("answer for unknown document {}", a.doc_id))?;
        let context = answer_context(&docs[di], a).ok_or_else(|| {
            anyhow!(
                "{}: answer region {}+{} is not inside one passage",
                a.doc_id,
                a.start,
                a.length
            )
        })?;
        let report = recover_spans(&parse_answer(&a.answer), context, a.start, entity_type);
        summary.recovered += report.recovered.len();
        summary.case_fallbacks += report.case_fallbacks;
        summary.ambiguous += report.ambiguous;
        summary
            .dropped
            .extend(report.dropped.into_iter().map(|item| DocDrop {
                doc_id: a.doc_id.clone(),
                item,
            }));
        recovered[di].extend(report.recovered);
    }
    let predicted: Vec<Document> = docs
        .iter()
        .zip(recovered)
        .map(|(d, mut annotations)| {
            annotations.sort_by_key(|a| (a.start, a.length));
            Document {
                doc_id: d.doc_id.clone(),
                passages: d.passages.clone(),
                annotations,
            }
        })
        .collect();
    let mut w = writer(out)?;
    write_corpus(&mut w, &predicted)?;
    w.flush()?;
    print_json(&summary)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct WindowRecord<'a> {
    doc_id: &'a str,
    start: usize,
    length: usize,
    #[serde(flatten)]
    window: IndexWindow,
}

pub fn windows(input: &CorpusIn, out: &Output) -> anyhow::Result<ExitCode> {
    let docs = load(input)?;
    let records: Vec<WindowRecord> = docs
        .iter()
        .flat_map(|d| {
            document_windows(d)
                .into_iter()
                .map(|(window, region)| WindowRecord {
                    doc_id: &d.doc_id,
                    start: region.start,
                    length: region.length,
                    window,
                })
        })
        .collect();
    let mut w = writer(out)?;
    write_jsonl(&mut w, &records)?;
    finish(w)
}
