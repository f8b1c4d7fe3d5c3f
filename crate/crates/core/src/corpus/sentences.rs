//! Rule-based sentence splitting.
//!
//! A sentence ends after `.`, `!` or `?` when the terminator is followed by
//! whitespace and then an uppercase letter or a digit. A period does not end a
//! sentence when the word before it is a guarded abbreviation (see
//! `data/abbreviations-v1.txt`) or a single uppercase letter.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub const ABBREVIATIONS_VERSION: &str = "1";

const ABBREVIATIONS_SRC: &str = include_str!("../../data/abbreviations-v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub length: usize,
}

impl SentenceSpan {
    pub fn new(start: usize, length: usize) -> Self {
        SentenceSpan { start, length }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

/// The guard list, in file order.
pub fn abbreviations() -> &'static [Vec<char>] {
    static LIST: OnceLock<Vec<Vec<char>>> = OnceLock::new();
    LIST.get_or_init(|| {
        ABBREVIATIONS_SRC
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.chars().collect())
            .collect()
    })
}

/// Splits `text` into sentence spans (offsets in scalar values, relative to
/// `text`). Spans never include leading or trailing whitespace.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = None;

    for (i, &c) in chars.iter().enumerate() {
        let s = match start {
            Some(s) => s,
            None if c.is_whitespace() => continue,
            None => {
                start = Some(i);
                i
            }
        };
        if matches!(c, '.' | '!' | '?') && ends_sentence(&chars, i) {
            spans.push(SentenceSpan::new(s, i + 1 - s));
            start = None;
        }
    }

    if let Some(s) = start {
        let end = chars
            .iter()
            .rposition(|c| !c.is_whitespace())
            .map_or(s, |e| e + 1);
        spans.push(SentenceSpan::new(s, end - s));
    }
    spans
}

fn ends_sentence(chars: &[char], term: usize) -> bool {
    let mut j = term + 1;
    if j >= chars.len() || !chars[j].is_whitespace() {
        return false;
    }
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    let opens = j < chars.len() && (chars[j].is_uppercase() || chars[j].is_ascii_digit());
    opens && !(chars[term] == '.' && is_guarded(chars, term))
}

fn is_guarded(chars: &[char], dot: usize) -> bool {
    let word_start = chars[..dot]
        .iter()
        .rposition(|c| c.is_whitespace())
        .map_or(0, |p| p + 1);
    let word: Vec<char> = chars[word_start..dot]
        .iter()
        .copied()
        .skip_while(|c| !c.is_alphanumeric())
        .collect();
    if word.len() == 1 && word[0].is_uppercase() {
        return true;
    }

    abbreviations().iter().any(|abbr| {
        let n = abbr.len();
        n <= dot
            && chars[dot - n..dot] == abbr[..]
            && (dot == n || !chars[dot - n - 1].is_alphanumeric())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts<'a>(text: &'a str, spans: &[SentenceSpan]) -> Vec<&'a str> {
        spans
            .iter()
            .map(|s| crate::span::char_slice(text, s.start, s.length).unwrap())
            .collect()
    }

    #[test]
    fn two_simple_sentences() {
        let t = "Aspirin works. It is cheap.";
        let spans = split_sentences(t);
        assert_eq!(
            spans,
            vec![SentenceSpan::new(0, 14), SentenceSpan::new(15, 12)]
        );
    }

    #[test]
    fn empty_and_unterminated() {
        assert_eq!(split_sentences(""), vec![]);
        assert_eq!(split_sentences("   \n"), vec![]);
        let t = "no terminal punctuation";
        assert_eq!(
            split_sentences(t),
            vec![SentenceSpan::new(0, t.chars().count())]
        );
    }

    #[test]
    fn guards_abbreviations_and_initials() {
        let t = "As shown in Fig. 2 the dose rose. Smith et al. Reported it. J. Doe agreed.";
        assert_eq!(
            texts(t, &split_sentences(t)),
            vec![
                "As shown in Fig. 2 the dose rose.",
                "Smith et al. Reported it.",
                "J. Doe agreed."
            ]
        );
        let t = "Drugs (e.g. Aspirin) help. Others vs. Placebo did not!";
        assert_eq!(
            texts(t, &split_sentences(t)),
            vec!["Drugs (e.g. Aspirin) help.", "Others vs. Placebo did not!"]
        );
    }

    #[test]
    fn requires_uppercase_or_digit_after_whitespace() {
        let t = "Values were 3.5 mg. then dropped. 12 patients left? Yes.";
        assert_eq!(
            texts(t, &split_sentences(t)),
            vec![
                "Values were 3.5 mg. then dropped.",
                "12 patients left?",
                "Yes."
            ]
        );
    }

    #[test]
    fn guard_matches_at_word_boundary_only() {
        // "Avs" is not the abbreviation "vs".
        let t = "See Avs. Then stop.";
        assert_eq!(
            texts(t, &split_sentences(t)),
            vec!["See Avs.", "Then stop."]
        );
    }

    #[test]
    fn offsets_are_scalar_values() {
        let t = "β-Carotene rose. Δ fell.";
        let spans = split_sentences(t);
        assert_eq!(
            spans,
            vec![SentenceSpan::new(0, 16), SentenceSpan::new(17, 7)]
        );
    }

    #[test]
    fn guard_list_loaded() {
        assert!(abbreviations()
            .iter()
            .any(|a| a.iter().collect::<String>() == "et al"));
    }
}
