//! Document ingestion: heading-based section extraction, whitespace +
//! punctuation tokenization with byte offsets, and rule-based sentence
//! segmentation.
//!
//! All offsets are byte offsets into the owning text. Everything here is
//! pure and deterministic; evaluation downstream is token-index based, so
//! the tokenizer only needs to be self-consistent.

use std::collections::HashSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// One token with its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    /// Exclusive end offset.
    pub char_end: usize,
    /// 0-based position within the sample.
    pub index: usize,
}

/// A heading match inside a document: the section body is
/// `[body_char_start, body_char_end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSplit {
    pub heading: String,
    pub body_char_start: usize,
    pub body_char_end: usize,
}

/// A tokenized document section: the unit that gets annotated, scored,
/// vectorized, and selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Corpus tag; TF-IDF weights are fitted per source.
    pub source: String,
    pub heading: String,
    pub text: String,
    pub tokens: Vec<Token>,
    /// Half-open token-index ranges partitioning `[0, tokens.len())`.
    pub sentence_bounds: Vec<(usize, usize)>,
}

impl Sample {
    /// Tokenize and sentence-split `text` into a ready sample.
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        heading: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        let sentence_bounds = split_sentences(&tokens, &text);
        Sample { id: id.into(), source: source.into(), heading: heading.into(), text, tokens, sentence_bounds }
    }

    /// Index of the sentence containing token `tok`, if any.
    pub fn sentence_of(&self, tok: usize) -> Option<usize> {
        self.sentence_bounds.iter().position(|&(s, e)| s <= tok && tok < e)
    }
}

fn heading_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Line-anchored run of alphanumeric, '/', '\', '&', or space characters
    // followed by a colon.
    RE.get_or_init(|| Regex::new(r"(?m)^[A-Za-z0-9/\\& ]+:").unwrap())
}

/// Split a document into heading-delimited sections. A section body runs
/// from just after the heading's colon to the start of the next heading
/// (or end of text). Text before the first heading is discarded.
pub fn extract_sections(document_text: &str) -> Vec<SectionSplit> {
    let matches: Vec<(usize, usize)> = heading_pattern()
        .find_iter(document_text)
        .map(|m| (m.start(), m.end()))
        .collect();
    matches
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| {
            let heading = document_text[start..end - 1].trim().to_string();
            let body_end = matches.get(k + 1).map_or(document_text.len(), |&(s, _)| s);
            SectionSplit { heading, body_char_start: end, body_char_end: body_end }
        })
        .collect()
}

/// Keep sections whose lowercased, whitespace-normalized heading is in
/// `heading_aliases` (aliases are expected lowercase).
pub fn filter_social_history(
    sections: &[SectionSplit],
    heading_aliases: &HashSet<String>,
) -> Vec<SectionSplit> {
    sections
        .iter()
        .filter(|s| {
            let normalized = s.heading.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            heading_aliases.contains(&normalized)
        })
        .cloned()
        .collect()
}

/// Split on whitespace, then peel leading/trailing ASCII punctuation
/// characters into separate tokens. Internal punctuation is retained
/// ("1-2" stays one token).
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut chunk_start = None;
    let push_chunk = |start: usize, end: usize, spans: &mut Vec<(usize, usize)>| {
        let chunk = &text[start..end];
        let chars: Vec<(usize, char)> =
            chunk.char_indices().map(|(i, c)| (start + i, c)).collect();
        let mut lo = 0;
        let mut hi = chars.len();
        let mut leading = Vec::new();
        let mut trailing = Vec::new();
        while lo < hi && chars[lo].1.is_ascii_punctuation() {
            leading.push(lo);
            lo += 1;
        }
        while hi > lo && chars[hi - 1].1.is_ascii_punctuation() {
            trailing.push(hi - 1);
            hi -= 1;
        }
        trailing.reverse();
        let char_end_of = |ci: usize| chars.get(ci + 1).map_or(end, |&(off, _)| off);
        for &ci in &leading {
            spans.push((chars[ci].0, char_end_of(ci)));
        }
        if lo < hi {
            spans.push((chars[lo].0, char_end_of(hi - 1)));
        }
        for &ci in &trailing {
            spans.push((chars[ci].0, char_end_of(ci)));
        }
    };

    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                push_chunk(s, i, &mut spans);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        push_chunk(s, text.len(), &mut spans);
    }

    for (index, (s, e)) in spans.into_iter().enumerate() {
        tokens.push(Token { text: text[s..e].to_string(), char_start: s, char_end: e, index });
    }
    tokens
}

/// Sentence bounds over token indices: a break falls after any token in
/// {".", "!", "?"} and wherever the inter-token gap contains a newline.
/// The trailing partial sentence is closed at the end.
pub fn split_sentences(tokens: &[Token], text: &str) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        let terminator = matches!(tok.text.as_str(), "." | "!" | "?");
        let gap_end = tokens.get(i + 1).map_or(text.len(), |t| t.char_start);
        let newline_follows = text[tok.char_end..gap_end].contains('\n');
        if terminator || newline_follows {
            bounds.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        bounds.push((start, tokens.len()));
    }
    bounds
}

/// Build samples from a raw document: extract sections, optionally filter
/// by heading aliases, and emit one sample per kept section with id
/// `"{stem}#{k}"` (k = ordinal among the kept sections).
pub fn samples_from_document(
    stem: &str,
    source: &str,
    text: &str,
    heading_aliases: Option<&HashSet<String>>,
) -> Vec<Sample> {
    let sections = extract_sections(text);
    let kept = match heading_aliases {
        Some(aliases) => filter_social_history(&sections, aliases),
        None => sections,
    };
    kept.iter()
        .enumerate()
        .map(|(k, s)| {
            Sample::new(
                format!("{stem}#{k}"),
                source,
                s.heading.clone(),
                &text[s.body_char_start..s.body_char_end],
            )
        })
        .collect()
}

/// Read every `*.txt` file under `dir` (one document per file), sorted by
/// file name for determinism. Returns `(stem, contents)` pairs.
pub fn read_documents(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::data(format!("non-UTF-8 file name: {}", path.display())))?
            .to_string();
        out.push((stem, std::fs::read_to_string(&path)?));
    }
    Ok(out)
}
