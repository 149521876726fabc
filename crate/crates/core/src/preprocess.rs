//! Segmentation of plain-text manuscripts into main content and bibliography,
//! followed by word chunking and the equation/table filter.
//!
//! Every step is fail-fast: a manuscript is either segmented with non-empty
//! content and a non-empty reference block, or it is rejected with a
//! [`Stage::Segment`] error and dropped from the dataset.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};

/// Maximum number of words per content chunk.
pub const CHUNK_LEN: usize = 512;

/// Chunks whose mean word length falls below this are treated as tables or
/// equations.
pub const MIN_AVG_WORD_LEN: f64 = 4.22;

pub const DEFAULT_SUPPLEMENT_KEYWORDS: [&str; 5] = [
    "Supplement",
    "Supplementary",
    "Appendix",
    "Discussion",
    "Acknowledgements",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentConfig {
    /// Headings after the bibliography that start discarded material.
    pub supplement_keywords: Vec<String>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            supplement_keywords: DEFAULT_SUPPLEMENT_KEYWORDS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Result of [`segment`]. Both `content` and `references_block` are
/// substrings of the cleaned input, in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedText {
    pub content: String,
    pub references_block: String,
    pub discarded_supplement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentChunk {
    pub words: Vec<String>,
    /// Ordinal of the chunk within its paper, before filtering.
    pub index: usize,
    pub avg_word_len: f64,
}

impl ContentChunk {
    pub fn new(words: Vec<String>, index: usize) -> Self {
        let avg_word_len = mean_word_len(&words);
        Self {
            words,
            index,
            avg_word_len,
        }
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

fn mean_word_len(words: &[String]) -> f64 {
    if words.is_empty() {
        return 0.0;
    }
    let chars: usize = words.iter().map(|w| w.chars().count()).sum();
    chars as f64 / words.len() as f64
}

/// True when a whitespace token looks like an e-mail address.
fn is_email_token(token: &str) -> bool {
    let token = token.trim_matches(|c: char| !c.is_alphanumeric());
    let Some((local, domain)) = token.split_once('@') else {
        return false;
    };
    if local.is_empty() || domain.is_empty() {
        return false;
    }
    match domain.rfind('.') {
        Some(dot) => dot > 0 && dot + 1 < domain.len(),
        None => false,
    }
}

fn is_discardable_line(line: &str) -> bool {
    let trimmed = line.trim();
    trimmed.is_empty()
        || trimmed.chars().all(|c| c.is_ascii_digit())
        || trimmed.split_whitespace().any(is_email_token)
}

/// Drops blank lines, lines holding an e-mail address, and lines made only of
/// digits (page numbers). Remaining lines keep their order.
pub fn clean_lines(raw: &str) -> String {
    raw.lines()
        .filter(|line| !is_discardable_line(line))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Matches `keyword` as a heading keyword at the start of `line`: only
/// whitespace may precede it, its first letter must be upper case, and it must
/// not continue into a longer word. Returns the byte offset just past the
/// keyword.
pub fn keyword_at_line_start(line: &str, keyword: &str) -> Option<usize> {
    let lead = line.len() - line.trim_start().len();
    let rest = &line[lead..];
    let first = rest.chars().next()?;
    if !first.is_uppercase() {
        return None;
    }
    let mut end = 0;
    let mut kw = keyword.chars();
    for (offset, c) in rest.char_indices() {
        match kw.next() {
            Some(k) => {
                if !c.to_lowercase().eq(k.to_lowercase()) {
                    return None;
                }
                end = offset + c.len_utf8();
            }
            None => {
                if c.is_alphabetic() {
                    return None;
                }
                return Some(lead + end);
            }
        }
    }
    if kw.next().is_some() {
        return None;
    }
    Some(lead + end)
}

fn introduction_heading() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:(?:\d+|[IVXLC]+)\.?\s+)?(?:Introduction|INTRODUCTION)(?:[^A-Za-z]|$)")
            .expect("static regex")
    })
}

fn is_first_reference_line(line: &str) -> bool {
    line.trim_start().starts_with("[1]")
}

/// Byte offsets of the start of every line in `text`.
fn line_starts(text: &str) -> Vec<usize> {
    let mut starts = vec![0];
    starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
    starts
}

fn line_at<'a>(text: &'a str, starts: &[usize], i: usize) -> &'a str {
    let end = starts.get(i + 1).map(|&s| s - 1).unwrap_or(text.len());
    &text[starts[i]..end]
}

/// Length of the separator run after a heading keyword, as in `Abstract:`
/// or `Abstract\u{2014}`.
fn heading_punctuation(rest: &str) -> usize {
    rest.len()
        - rest
            .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ':' | '.' | '-' | '\u{2013}' | '\u{2014}'))
            .len()
}

/// Splits cleaned text into header (discarded), content, reference block and
/// trailing supplement.
pub fn segment(cleaned: &str, config: &SegmentConfig) -> Result<SegmentedText> {
    let starts = line_starts(cleaned);
    let n_lines = starts.len();
    let line = |i: usize| line_at(cleaned, &starts, i);

    // Content start: after the "Abstract" keyword, otherwise an Introduction
    // heading (kept as part of the content).
    let mut content_line = None;
    let mut content_offset = 0;
    for (i, &start) in starts.iter().enumerate() {
        if let Some(end) = keyword_at_line_start(line(i), "Abstract") {
            content_line = Some(i);
            content_offset = start + end + heading_punctuation(&line(i)[end..]);
            break;
        }
    }
    if content_line.is_none() {
        if let Some(i) = (0..n_lines).find(|&i| introduction_heading().is_match(line(i))) {
            content_line = Some(i);
            content_offset = starts[i];
        }
    }
    let Some(content_line) = content_line else {
        return Err(Error::fail_fast(
            Stage::Segment,
            "no abstract keyword or introduction heading",
        ));
    };

    // The first bibliography anchor wins.
    let mut refs_start = None;
    for (i, &start) in starts.iter().enumerate().skip(content_line + 1) {
        let l = line(i);
        if let Some(end) = keyword_at_line_start(l, "References") {
            refs_start = Some((i, start + end + heading_punctuation(&l[end..])));
            break;
        }
        if is_first_reference_line(l) {
            refs_start = Some((i, start));
            break;
        }
    }
    let Some((refs_line, refs_offset)) = refs_start else {
        return Err(Error::fail_fast(Stage::Segment, "no references anchor"));
    };

    let supplement_line = (refs_line + 1..n_lines).find(|&i| {
        config
            .supplement_keywords
            .iter()
            .any(|kw| keyword_at_line_start(line(i), kw).is_some())
    });
    let refs_end = supplement_line.map(|i| starts[i]).unwrap_or(cleaned.len());

    let content = cleaned[content_offset..starts[refs_line]].trim();
    let references_block = cleaned[refs_offset..refs_end].trim();
    let discarded_supplement = cleaned[refs_end..].trim();

    if content.is_empty() {
        return Err(Error::fail_fast(Stage::Segment, "empty content"));
    }
    if references_block.is_empty() {
        return Err(Error::fail_fast(Stage::Segment, "empty references block"));
    }
    Ok(SegmentedText {
        content: content.to_string(),
        references_block: references_block.to_string(),
        discarded_supplement: discarded_supplement.to_string(),
    })
}

/// Greedy whitespace-token chunking. The last chunk may be shorter.
pub fn chunk(content: &str, chunk_len: usize) -> Result<Vec<ContentChunk>> {
    if chunk_len == 0 {
        return Err(Error::config("chunk_len", "must be at least 1"));
    }
    let words: Vec<String> = content.split_whitespace().map(str::to_string).collect();
    Ok(words
        .chunks(chunk_len)
        .enumerate()
        .map(|(index, ws)| ContentChunk::new(ws.to_vec(), index))
        .collect())
}

/// Keeps chunks whose mean word length is at least `min_avg_len`, in order.
pub fn filter_chunks(chunks: Vec<ContentChunk>, min_avg_len: f64) -> Vec<ContentChunk> {
    chunks
        .into_iter()
        .filter(|c| c.avg_word_len >= min_avg_len)
        .collect()
}

/// The first chunk of a paper, which is exempt from the word-length filter.
pub fn first_chunk_mode(chunks: &[ContentChunk]) -> Result<ContentChunk> {
    chunks
        .iter()
        .find(|c| c.index == 0)
        .or_else(|| chunks.first())
        .cloned()
        .ok_or_else(|| Error::fail_fast(Stage::Chunk, "paper has no content chunks"))
}
