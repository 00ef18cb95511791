//! Tokenization shared by the link matcher, the encoder and query generation.

use std::ops::Range;

/// Lowercased alphanumeric words. Every non-alphanumeric character delimits.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A whitespace-delimited token with surrounding punctuation trimmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub range: Range<usize>,
    pub folded: String,
}

const TRIM: &[char] = &[
    '.', ',', ';', ':', '!', '?', '(', ')', '[', ']', '{', '}', '"', '\'', '/',
];

/// Splits on whitespace, trims punctuation from both ends and keeps byte
/// ranges into `text` so matches can be spliced back into the original.
pub fn spans(text: &str) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = None;
    let push = |s: usize, e: usize, out: &mut Vec<Span>| {
        let raw = &text[s..e];
        let lead = raw.len() - raw.trim_start_matches(TRIM).len();
        let trimmed = raw.trim_matches(TRIM);
        if !trimmed.is_empty() {
            let b = s + lead;
            out.push(Span {
                range: b..b + trimmed.len(),
                folded: trimmed.to_lowercase(),
            });
        }
    };
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                push(s, i, &mut out);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut out);
    }
    out
}

/// Case-folded token sequence of a code or description, for matching
/// against [`spans`].
pub fn folded_tokens(text: &str) -> Vec<String> {
    spans(text).into_iter().map(|s| s.folded).collect()
}

/// True when `needle` occurs in `hay` starting at token `at`.
pub fn matches_at(hay: &[Span], at: usize, needle: &[String]) -> bool {
    !needle.is_empty()
        && at + needle.len() <= hay.len()
        && hay[at..at + needle.len()]
            .iter()
            .zip(needle)
            .all(|(s, n)| &s.folded == n)
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}
