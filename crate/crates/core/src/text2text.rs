//! Text-to-text codec: prompt/target construction for question-style and
//! special-token-style generators, answer parsing, span recovery and
//! indexing windows.
//!
//! Template strings are versioned by [`TEMPLATE_VERSION`]; changing any of
//! them is a breaking change.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Document, SentenceSpan};
use crate::error::{Error, Result};
use crate::span::{char_len, char_slice, overlap_len};
use crate::Task;

pub const TEMPLATE_VERSION: &str = "1";

pub const NER_QUESTION: &str = "question: which chemicals are mentioned? context: ";
pub const NER_TOKEN: &str = "<|NER|>";
pub const INDEX_TOKEN: &str = "<|INDEX|>";
pub const END_TOKEN: &str = "<|END|>";
pub const NONE_TARGET: &str = "none";
pub const ITEM_DELIMITER: &str = "; ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    /// Natural-language question.
    Question,
    /// Context followed by a task token; targets end with `<|END|>`.
    SpecialToken,
}

impl std::fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptStyle::Question => "question",
            PromptStyle::SpecialToken => "special-token",
        })
    }
}

/// A prompt/target pair with the document region it came from. For NER and
/// linking `start`/`length` give the sentence; for indexing they give the
/// region covered by the window's sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub task: Task,
    pub style: PromptStyle,
    pub doc_id: String,
    pub start: usize,
    pub length: usize,
    #[serde(skip)]
    pub context: String,
    pub prompt: String,
    pub target: String,
}

/// A generator's output for one prompt; mirrors [`PromptExample`] with
/// `answer` in place of `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub task: Task,
    pub style: PromptStyle,
    pub doc_id: String,
    pub start: usize,
    pub length: usize,
    pub prompt: String,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance<'a> {
    pub doc_id: &'a str,
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexWindow {
    pub title: String,
    pub sentences: Vec<String>,
    pub keywords: Vec<String>,
    pub window_index: usize,
}

impl IndexWindow {
    pub fn context(&self) -> String {
        self.sentences.join(" ")
    }
}

/// Gold content for one prompt.
#[derive(Debug, Clone, Copy)]
pub enum PromptInput<'a> {
    /// Entity surfaces in order of first occurrence; repeats are collapsed.
    Ner {
        context: &'a str,
        entities: &'a [String],
    },
    Linking {
        context: &'a str,
        mention: &'a str,
        mesh_ids: &'a [String],
    },
    Indexing {
        window: &'a IndexWindow,
        topics: &'a [String],
    },
}

fn join_items<S: AsRef<str>>(items: &[S]) -> Result<String> {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for item in items {
        let item = item.as_ref();
        if item.trim().is_empty() || item.trim() != item || item.contains(';') {
            return Err(Error::InvalidPrompt(format!(
                "item {item:?} is empty, padded, or contains ';'"
            )));
        }
        if seen.insert(item) {
            kept.push(item);
        }
    }
    Ok(if kept.is_empty() {
        NONE_TARGET.to_string()
    } else {
        kept.join(ITEM_DELIMITER)
    })
}

fn indexing_body(w: &IndexWindow) -> String {
    let context = w.context();
    let mut out = format!("title: {} abstract:", w.title);
    if !context.is_empty() {
        out.push(' ');
        out.push_str(&context);
    }
    out.push_str(" keywords:");
    if !w.keywords.is_empty() {
        out.push(' ');
        out.push_str(&w.keywords.join(ITEM_DELIMITER));
    }
    out
}

/// Builds a prompt/target pair from the fixed templates.
pub fn make_prompt(
    style: PromptStyle,
    input: PromptInput<'_>,
    provenance: Provenance<'_>,
) -> Result<PromptExample> {
    let (task, context, prompt, answer) = match input {
        PromptInput::Ner { context, entities } => {
            if context.is_empty() {
                return Err(Error::InvalidPrompt("empty context".into()));
            }
            let answer = join_items(entities)?;
            let prompt = match style {
                PromptStyle::Question => format!("{NER_QUESTION}{context}"),
                PromptStyle::SpecialToken => format!("{context} {NER_TOKEN}"),
            };
            (Task::Ner, context.to_string(), prompt, answer)
        }
        PromptInput::Linking {
            context,
            mention,
            mesh_ids,
        } => {
            if style == PromptStyle::SpecialToken {
                return Err(Error::UnsupportedCombination {
                    task: "linking".into(),
                    style: style.to_string(),
                });
            }
            if context.is_empty() {
                return Err(Error::InvalidPrompt("empty context".into()));
            }
            if mention.is_empty() || !context.contains(mention) {
                return Err(Error::InvalidPrompt(format!(
                    "mention {mention:?} not in context"
                )));
            }
            let prompt = format!(
                "question: what is the MeSH identifier of \"{mention}\"? context: {context}"
            );
            (
                Task::Linking,
                context.to_string(),
                prompt,
                join_items(mesh_ids)?,
            )
        }
        PromptInput::Indexing { window, topics } => {
            let body = indexing_body(window);
            let prompt = match style {
                PromptStyle::Question => body,
                PromptStyle::SpecialToken => format!("{body} {INDEX_TOKEN}"),
            };
            (
                Task::Indexing,
                window.context(),
                prompt,
                join_items(topics)?,
            )
        }
    };
    let target = match style {
        PromptStyle::Question => answer,
        PromptStyle::SpecialToken => format!("{answer} {END_TOKEN}"),
    };
    Ok(PromptExample {
        task,
        style,
        doc_id: provenance.doc_id.to_string(),
        start: provenance.start,
        length: provenance.length,
        context,
        prompt,
        target,
    })
}

/// Splits a generated answer into items. Text after `<|END|>` is discarded,
/// items are trimmed, empties dropped and repeats removed; a lone `none`
/// (any case) means no items.
pub fn parse_answer(answer: &str) -> Vec<String> {
    let body = answer.split(END_TOKEN).next().unwrap_or("").trim();
    if body.eq_ignore_ascii_case(NONE_TARGET) {
        return Vec::new();
    }
    let mut seen = HashSet::new();
    body.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty() && seen.insert(*s))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// No occurrence, exact or case-insensitive.
    NotFound,
    /// Every occurrence overlaps a span claimed by an earlier item.
    AlreadyClaimed,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedItem {
    pub item: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RecoveryReport {
    /// In item order, document coordinates.
    pub recovered: Vec<Annotation>,
    pub dropped: Vec<DroppedItem>,
    /// Items placed by case-insensitive matching.
    pub case_fallbacks: usize,
    /// Items with more than one unclaimed occurrence; the leftmost was taken.
    pub ambiguous: usize,
}

impl RecoveryReport {
    pub fn merge(&mut self, other: RecoveryReport) {
        self.recovered.extend(other.recovered);
        self.dropped.extend(other.dropped);
        self.case_fallbacks += other.case_fallbacks;
        self.ambiguous += other.ambiguous;
    }
}

fn chars_eq_ci(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// Start positions of every occurrence of `needle` in `hay`.
fn occurrences(hay: &[char], needle: &[char], case_insensitive: bool) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    (0..=hay.len() - needle.len())
        .filter(|&p| {
            hay[p..p + needle.len()].iter().zip(needle).all(|(&h, &n)| {
                if case_insensitive {
                    chars_eq_ci(h, n)
                } else {
                    h == n
                }
            })
        })
        .collect()
}

/// Locates generated items in `context`. Each item takes its leftmost exact
/// occurrence not overlapping an earlier claim, falling back to the leftmost
/// unclaimed case-insensitive occurrence. Offsets are shifted by
/// `context_offset`.
pub fn recover_spans<S: AsRef<str>>(
    items: &[S],
    context: &str,
    context_offset: usize,
    entity_type: &str,
) -> RecoveryReport {
    let hay: Vec<char> = context.chars().collect();
    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut report = RecoveryReport::default();

    for item in items {
        let item = item.as_ref();
        let needle: Vec<char> = item.chars().collect();
        if needle.is_empty() {
            report.dropped.push(DroppedItem {
                item: item.to_string(),
                reason: DropReason::Empty,
            });
            continue;
        }
        let free = |starts: Vec<usize>| -> (usize, Vec<usize>) {
            let total = starts.len();
            let free = starts
                .into_iter()
                .filter(|&p| {
                    claimed
                        .iter()
                        .all(|&(s, e)| overlap_len(p, p + needle.len(), s, e) == 0)
                })
                .collect();
            (total, free)
        };

        let (exact_total, exact) = free(occurrences(&hay, &needle, false));
        let (ci_total, ci) = free(occurrences(&hay, &needle, true));
        let (pos, candidates) = if let Some(&p) = exact.first() {
            (p, exact.len())
        } else if let Some(&p) = ci.first() {
            report.case_fallbacks += 1;
            (p, ci.len())
        } else {
            let reason = if exact_total + ci_total == 0 {
                DropReason::NotFound
            } else {
                DropReason::AlreadyClaimed
            };
            report.dropped.push(DroppedItem {
                item: item.to_string(),
                reason,
            });
            continue;
        };
        if candidates > 1 {
            report.ambiguous += 1;
        }
        claimed.push((pos, pos + needle.len()));
        report.recovered.push(Annotation {
            start: context_offset + pos,
            length: needle.len(),
            surface: hay[pos..pos + needle.len()].iter().collect(),
            entity_type: entity_type.to_string(),
            mesh_ids: Vec::new(),
        });
    }
    report
}

/// Groups abstract sentences into consecutive non-overlapping pairs; an odd
/// count leaves a final single-sentence window and no sentences yield one
/// title/keywords-only window.
pub fn index_windows<S: AsRef<str>>(
    title: &str,
    sentences: &[S],
    keywords: &[String],
) -> Vec<IndexWindow> {
    let window = |i: usize, s: &[S]| IndexWindow {
        title: title.to_string(),
        sentences: s.iter().map(|x| x.as_ref().to_string()).collect(),
        keywords: keywords.to_vec(),
        window_index: i,
    };
    if sentences.is_empty() {
        return vec![window(0, &[])];
    }
    sentences
        .chunks(2)
        .enumerate()
        .map(|(i, pair)| window(i, pair))
        .collect()
}

/// Union of per-window predictions in first-occurrence order.
pub fn aggregate_topics<S: AsRef<str>>(window_predictions: &[Vec<S>]) -> Vec<String> {
    let mut seen = HashSet::new();
    window_predictions
        .iter()
        .flatten()
        .map(AsRef::as_ref)
        .filter(|id| seen.insert(*id))
        .map(str::to_string)
        .collect()
}

/// Entity surfaces of the annotations inside `sentence`, by start offset,
/// without repeats.
pub fn sentence_entities(doc: &Document, sentence: SentenceSpan) -> Vec<String> {
    let mut inside: Vec<&Annotation> = doc
        .annotations
        .iter()
        .filter(|a| a.start >= sentence.start && a.end() <= sentence.end())
        .collect();
    inside.sort_by_key(|a| (a.start, a.length));
    let mut seen = HashSet::new();
    inside
        .into_iter()
        .filter(|a| seen.insert(a.surface.as_str()))
        .map(|a| a.surface.clone())
        .collect()
}

/// One NER example per sentence of the document.
pub fn ner_examples(doc: &Document, style: PromptStyle) -> Result<Vec<PromptExample>> {
    doc.sentences()
        .into_iter()
        .map(|s| {
            let context = doc.text_at(s.start, s.length).ok_or_else(|| {
                Error::InvalidPrompt(format!("{}: sentence outside passages", doc.doc_id))
            })?;
            let entities = sentence_entities(doc, s);
            make_prompt(
                style,
                PromptInput::Ner {
                    context,
                    entities: &entities,
                },
                Provenance {
                    doc_id: &doc.doc_id,
                    start: s.start,
                    length: s.length,
                },
            )
        })
        .collect()
}

/// One linking example per annotation that sits inside a sentence. Mentions
/// crossing a sentence boundary are skipped; the count is returned.
pub fn linking_examples(doc: &Document, style: PromptStyle) -> Result<(Vec<PromptExample>, usize)> {
    let projection = doc.project_annotations();
    let mut out = Vec::new();
    for (a, slot) in doc.annotations.iter().zip(&projection.assignment) {
        let Some(si) = slot else { continue };
        let s = projection.sentences[*si];
        let context = doc.text_at(s.start, s.length).ok_or_else(|| {
            Error::InvalidPrompt(format!("{}: sentence outside passages", doc.doc_id))
        })?;
        out.push(make_prompt(
            style,
            PromptInput::Linking {
                context,
                mention: &a.surface,
                mesh_ids: &a.mesh_ids,
            },
            Provenance {
                doc_id: &doc.doc_id,
                start: s.start,
                length: s.length,
            },
        )?);
    }
    Ok((out, projection.conflict_count()))
}

fn section_is(section: &str, name: &str) -> bool {
    section.to_ascii_lowercase().starts_with(name)
}

/// Indexing windows for a document: the title passage(s), sentences of the
/// abstract passage(s), and keywords split on `;` or `,`. Each window comes
/// with the document region it covers (the title region for a window without
/// sentences).
pub fn document_windows(doc: &Document) -> Vec<(IndexWindow, SentenceSpan)> {
    let title_passages: Vec<_> = doc
        .passages
        .iter()
        .filter(|p| section_is(&p.section, "title"))
        .collect();
    let title = title_passages
        .iter()
        .map(|p| p.text.trim())
        .collect::<Vec<_>>()
        .join(" ");
    let keywords: Vec<String> = doc
        .passages
        .iter()
        .filter(|p| section_is(&p.section, "keyword"))
        .flat_map(|p| p.text.split([';', ',']))
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(str::to_string)
        .collect();
    let spans: Vec<SentenceSpan> = doc
        .passages
        .iter()
        .filter(|p| section_is(&p.section, "abstract"))
        .flat_map(|p| {
            crate::corpus::split_sentences(&p.text)
                .into_iter()
                .map(move |s| SentenceSpan::new(s.start + p.offset, s.length))
        })
        .collect();
    let texts: Vec<&str> = spans
        .iter()
        .map(|s| doc.text_at(s.start, s.length).unwrap_or_default())
        .collect();

    let windows = index_windows(&title, &texts, &keywords);
    if spans.is_empty() {
        let region = title_passages.first().map_or(SentenceSpan::new(0, 0), |p| {
            SentenceSpan::new(p.offset, char_len(&p.text))
        });
        return windows.into_iter().map(|w| (w, region)).collect();
    }
    windows
        .into_iter()
        .zip(spans.chunks(2))
        .map(|(w, pair)| {
            let (first, last) = (pair[0], pair[pair.len() - 1]);
            (w, SentenceSpan::new(first.start, last.end() - first.start))
        })
        .collect()
}

/// Context text addressed by an answer's provenance.
pub fn answer_context<'a>(doc: &'a Document, answer: &GeneratedAnswer) -> Option<&'a str> {
    let p = &doc.passages[doc.passage_containing(answer.start, answer.length)?];
    char_slice(&p.text, answer.start - p.offset, answer.length)
}
