use serde::{Deserialize, Serialize};

use crate::preprocess::ContentChunk;
use crate::refparse::CitedReference;

/// A manuscript after segmentation, chunking and reference parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPaper {
    pub id: String,
    pub title: String,
    pub authors: Vec<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub chunks: Vec<ContentChunk>,
    pub references: Vec<CitedReference>,
}

impl ParsedPaper {
    /// Every cited surname occurrence, in bibliography order.
    pub fn cited_surnames(&self) -> impl Iterator<Item = &str> {
        self.references
            .iter()
            .flat_map(|r| r.surnames.iter().map(String::as_str))
    }
}

/// Lower-cased last whitespace token of a full name.
pub fn surname_of(full_name: &str) -> String {
    full_name
        .split_whitespace()
        .last()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}
