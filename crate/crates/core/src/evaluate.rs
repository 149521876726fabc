//! Chunk-averaged prediction and the single/multi-author metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax;

pub const DEFAULT_RATIO: f64 = 0.1;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperPrediction {
    pub paper_id: String,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Label indices by descending probability, ties by ascending index.
    pub ranked: Vec<usize>,
}

impl PaperPrediction {
    /// Averages per-chunk logits before the softmax.
    pub fn from_chunk_logits(paper_id: impl Into<String>, chunk_logits: &[Vec<f64>]) -> Result<Self> {
        let first = chunk_logits
            .first()
            .ok_or_else(|| Error::config("prediction", "paper has no chunks"))?;
        let n = first.len();
        if chunk_logits.iter().any(|l| l.len() != n) {
            return Err(Error::config("prediction", "chunk logits differ in length"));
        }
        let mut mean = vec![0.0; n];
        for l in chunk_logits {
            for (m, x) in mean.iter_mut().zip(l) {
                *m += x;
            }
        }
        let k = chunk_logits.len() as f64;
        for m in &mut mean {
            *m /= k;
        }
        Ok(Self::from_logits(paper_id, mean))
    }

    pub fn from_logits(paper_id: impl Into<String>, logits: Vec<f64>) -> Self {
        let probabilities = softmax(&logits);
        let ranked = rank(&probabilities);
        Self {
            paper_id: paper_id.into(),
            logits,
            probabilities,
            ranked,
        }
    }
}

pub fn rank(probabilities: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probabilities.len()).collect();
    idx.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b)));
    idx
}

fn top(pred: &PaperPrediction, n: usize) -> BTreeSet<usize> {
    pred.ranked.iter().take(n).copied().collect()
}

/// The most likely label is an author.
pub fn metric1(pred: &PaperPrediction, gold: &BTreeSet<usize>) -> bool {
    pred.ranked.first().is_some_and(|l| gold.contains(l))
}

/// The top `|gold|` labels are exactly the authors.
pub fn metric2(pred: &PaperPrediction, gold: &BTreeSet<usize>) -> bool {
    top(pred, gold.len()) == *gold
}

/// Number of labels with probability at least `ratio` times the maximum.
pub fn estimate_author_count(pred: &PaperPrediction, ratio: f64) -> usize {
    let max = pred.probabilities.iter().copied().fold(0.0, f64::max);
    pred.probabilities.iter().filter(|&&p| p >= ratio * max).count().max(1)
}

/// The top `n̂` labels are exactly the authors.
pub fn metric3(pred: &PaperPrediction, gold: &BTreeSet<usize>, ratio: f64) -> bool {
    top(pred, estimate_author_count(pred, ratio)) == *gold
}

/// Every author is among the top `k` labels.
pub fn metric4(pred: &PaperPrediction, gold: &BTreeSet<usize>, k: usize) -> bool {
    gold.is_subset(&top(pred, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValues {
    pub n: usize,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n: usize,
    hits: [usize; 4],
}

impl Tally {
    fn add(&mut self, hits: [bool; 4]) {
        self.n += 1;
        for (h, b) in self.hits.iter_mut().zip(hits) {
            *h += b as usize;
        }
    }

    fn values(&self) -> MetricValues {
        let f = |h: usize| if self.n == 0 { 0.0 } else { h as f64 / self.n as f64 };
        MetricValues {
            n: self.n,
            m1: f(self.hits[0]),
            m2: f(self.hits[1]),
            m3: f(self.hits[2]),
            m4: f(self.hits[3]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorAccuracy {
    pub label: usize,
    pub name: String,
    /// Training samples carrying this label.
    pub train_papers: usize,
    /// Test papers with this author in the gold set.
    pub test_papers: usize,
    /// Share of those test papers whose top label is this author.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub ratio: f64,
    pub k: usize,
    pub single: MetricValues,
    pub multi: MetricValues,
    pub overall: MetricValues,
    pub per_author: Vec<AuthorAccuracy>,
    /// Test papers that could not be scored, with the reason.
    pub excluded: BTreeMap<String, String>,
}

pub struct EvalSample<'a> {
    pub prediction: &'a PaperPrediction,
    pub gold: &'a BTreeSet<usize>,
}

/// Metrics overall and split by gold-set size, plus per-author accuracy.
/// `names` and `train_counts` are indexed by label.
pub fn report(
    dataset: &str,
    samples: &[EvalSample<'_>],
    names: &[String],
    train_counts: &[usize],
    ratio: f64,
    k: usize,
) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::config("test", "test split is empty"));
    }
    let mut ordered: Vec<&EvalSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.prediction.paper_id.cmp(&b.prediction.paper_id));

    let (mut single, mut multi, mut overall) = (Tally::default(), Tally::default(), Tally::default());
    let mut author_hits = vec![(0usize, 0usize); names.len()];
    for s in ordered {
        if s.gold.is_empty() || s.gold.iter().any(|&g| g >= names.len()) {
            return Err(Error::config("gold", format!("invalid gold set for {}", s.prediction.paper_id)));
        }
        let p = s.prediction;
        let hits = [
            metric1(p, s.gold),
            metric2(p, s.gold),
            metric3(p, s.gold, ratio),
            metric4(p, s.gold, k),
        ];
        overall.add(hits);
        if s.gold.len() == 1 {
            single.add(hits);
        } else {
            multi.add(hits);
        }
        for &g in s.gold {
            author_hits[g].0 += 1;
            if p.ranked.first() == Some(&g) {
                author_hits[g].1 += 1;
            }
        }
    }
    let per_author = names
        .iter()
        .enumerate()
        .map(|(label, name)| {
            let (n, hit) = author_hits[label];
            AuthorAccuracy {
                label,
                name: name.clone(),
                train_papers: train_counts.get(label).copied().unwrap_or(0),
                test_papers: n,
                accuracy: if n == 0 { 0.0 } else { hit as f64 / n as f64 },
            }
        })
        .collect();
    Ok(MetricReport {
        dataset: dataset.to_string(),
        ratio,
        k,
        single: single.values(),
        multi: multi.values(),
        overall: overall.values(),
        per_author,
        excluded: BTreeMap::new(),
    })
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset {}", self.dataset);
        let _ = writeln!(out, "ratio {} k {}", self.ratio, self.k);
        let _ = writeln!(out, "{:<8} {:>6} {:>7} {:>7} {:>7} {:>7}", "stratum", "n", "m1", "m2", "m3", "m4");
        for (name, v) in [("single", &self.single), ("multi", &self.multi), ("overall", &self.overall)] {
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>7.1} {:>7.1} {:>7.1} {:>7.1}",
                name,
                v.n,
                100.0 * v.m1,
                100.0 * v.m2,
                100.0 * v.m3,
                100.0 * v.m4
            );
        }
        if !self.excluded.is_empty() {
            let _ = writeln!(out, "excluded {}", self.excluded.len());
        }
        out
    }

    /// Per-author accuracy next to the number of training papers.
    pub fn per_author_csv(&self) -> String {
        let mut out = String::from("label,name,train_papers,test_papers,accuracy\n");
        for a in &self.per_author {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                a.label,
                csv_field(&a.name),
                a.train_papers,
                a.test_papers,
                a.accuracy
            );
        }
        out
    }

    /// Number of authors per accuracy bin of width `1 / bins`; authors
    /// without test papers are left out.
    pub fn histogram_csv(&self, bins: usize) -> String {
        let bins = bins.max(1);
        let mut counts = vec![0usize; bins];
        for a in self.per_author.iter().filter(|a| a.test_papers > 0) {
            let b = ((a.accuracy * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let mut out = String::from("bin_low,bin_high,authors\n");
        for (i, c) in counts.iter().enumerate() {
            let _ = writeln!(out, "{:.3},{:.3},{}", i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
