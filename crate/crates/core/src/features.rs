//! Reference histogram features: the cited-surname vocabulary, per-paper
//! histograms, the self-citation ablation and the compression MLP.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AuthorLabel, TrainSample};
use crate::nn::{relu, Dense};
use crate::paper::{surname_of, ParsedPaper};

/// Output width of the reference MLP.
pub const RHE_OUT: usize = 128;

/// Surnames cited more than `min_count` times in the training split.
pub const DEFAULT_MIN_COUNT: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRecord", into = "VocabRecord")]
pub struct CitationVocab {
    /// Descending count, ties lexicographic.
    pub surnames: Vec<String>,
    pub counts: Vec<usize>,
    pub min_count: usize,
    index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    min_count: usize,
    surnames: Vec<String>,
    counts: Vec<usize>,
}

impl From<VocabRecord> for CitationVocab {
    fn from(r: VocabRecord) -> Self {
        Self::assemble(r.surnames, r.counts, r.min_count)
    }
}

impl From<CitationVocab> for VocabRecord {
    fn from(v: CitationVocab) -> Self {
        Self {
            min_count: v.min_count,
            surnames: v.surnames,
            counts: v.counts,
        }
    }
}

impl CitationVocab {
    fn from_counts(counts: BTreeMap<&str, usize>, min_count: usize) -> Self {
        let mut entries: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, n)| n > min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let surnames: Vec<String> = entries.iter().map(|(s, _)| s.to_string()).collect();
        let counts = entries.iter().map(|(_, n)| *n).collect();
        Self::assemble(surnames, counts, min_count)
    }

    fn assemble(surnames: Vec<String>, counts: Vec<usize>, min_count: usize) -> Self {
        let index = surnames.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self {
            surnames,
            counts,
            min_count,
            index,
        }
    }

    /// Builds the vocabulary from training samples only; test papers never
    /// reach this constructor.
    pub fn from_train_split(train: &[TrainSample], min_count: usize) -> Self {
        Self::from_papers(train.iter().map(|s| &s.paper), min_count)
    }

    pub(crate) fn from_papers<'a>(papers: impl IntoIterator<Item = &'a ParsedPaper>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for paper in papers {
            for s in paper.cited_surnames() {
                *counts.entry(s).or_default() += 1;
            }
        }
        Self::from_counts(counts, min_count)
    }

    pub fn len(&self) -> usize {
        self.surnames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surnames.is_empty()
    }

    pub fn position(&self, surname: &str) -> Option<usize> {
        self.index.get(surname).copied()
    }

    /// `# min_count <n>` header, then `surname<TAB>count` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# min_count {}\n", self.min_count);
        for (s, n) in self.surnames.iter().zip(&self.counts) {
            let _ = writeln!(out, "{s}\t{n}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::format("vocabulary", m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let min_count = header
            .strip_prefix("# min_count ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(format!("bad header `{header}`")))?;
        let mut surnames = Vec::new();
        let mut counts = Vec::new();
        for line in lines {
            let (s, n) = line.split_once('\t').ok_or_else(|| bad(format!("bad line `{line}`")))?;
            surnames.push(s.to_string());
            counts.push(n.parse().map_err(|_| bad(format!("bad count `{n}`")))?);
        }
        Ok(Self::assemble(surnames, counts, min_count))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceHistogram {
    pub counts: Vec<u32>,
}

impl ReferenceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Raw counts, or an L1-normalized distribution when `normalize` is set.
    pub fn to_input(&self, normalize: bool) -> Vec<f64> {
        let total = self.total();
        self.counts
            .iter()
            .map(|&c| {
                if normalize && total > 0 {
                    c as f64 / total as f64
                } else {
                    c as f64
                }
            })
            .collect()
    }
}

pub fn histogram(paper: &ParsedPaper, vocab: &CitationVocab) -> ReferenceHistogram {
    let mut counts = vec![0u32; vocab.len()];
    for s in paper.cited_surnames() {
        if let Some(i) = vocab.position(s) {
            counts[i] += 1;
        }
    }
    ReferenceHistogram { counts }
}

/// Removes every reference that cites the author's surname.
pub fn strip_self_citations(paper: &ParsedPaper, author: &AuthorLabel) -> ParsedPaper {
    strip_surnames(paper, &[surname_of(&author.canonical_name)])
}

pub(crate) fn strip_surnames(paper: &ParsedPaper, surnames: &[String]) -> ParsedPaper {
    let mut out = paper.clone();
    out.references
        .retain(|r| !r.surnames.iter().any(|s| surnames.iter().any(|x| x == s)));
    out
}

/// Removes citations of any of the paper's own declared authors.
pub fn strip_own_citations(paper: &ParsedPaper) -> ParsedPaper {
    let own: Vec<String> = paper
        .authors
        .iter()
        .map(|a| surname_of(a))
        .filter(|s| !s.is_empty())
        .collect();
    strip_surnames(paper, &own)
}

/// Share of references citing one of the paper's own authors, over a corpus.
pub fn self_citation_fraction<'a>(papers: impl IntoIterator<Item = &'a ParsedPaper>) -> f64 {
    let (mut own, mut total) = (0usize, 0usize);
    for p in papers {
        total += p.references.len();
        own += p.references.len() - strip_own_citations(p).references.len();
    }
    if total == 0 {
        0.0
    } else {
        own as f64 / total as f64
    }
}

/// Width of the middle layer for a histogram of `n_hist` entries.
pub fn rhe_hidden_width(n_hist: usize, out: usize) -> usize {
    (n_hist + out) / 2
}

/// Two affine layers with a ReLU in between: `N -> (N + out) / 2 -> out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RheParams {
    pub hidden: Dense,
    pub output: Dense,
}

impl RheParams {
    pub fn zeros(n_hist: usize, out: usize) -> Self {
        let mid = rhe_hidden_width(n_hist, out);
        Self {
            hidden: Dense::zeros(n_hist, mid),
            output: Dense::zeros(mid, out),
        }
    }

    pub fn init<R: rand::Rng>(n_hist: usize, out: usize, rng: &mut R) -> Self {
        let mid = rhe_hidden_width(n_hist, out);
        Self {
            hidden: Dense::init(n_hist, mid, rng),
            output: Dense::init(mid, out, rng),
        }
    }

    pub fn n_hist(&self) -> usize {
        self.hidden.inputs
    }

    pub fn out_dim(&self) -> usize {
        self.output.outputs
    }
}

pub fn rhe_forward(h: &[f64], params: &RheParams) -> Result<Vec<f64>> {
    if h.len() != params.n_hist() {
        return Err(Error::config(
            "histogram",
            format!("length {} does not match vocabulary size {}", h.len(), params.n_hist()),
        ));
    }
    let mut mid = params.hidden.forward(h);
    relu(&mut mid);
    Ok(params.output.forward(&mid))
}
