//! Labeled dataset construction: author thresholding, stratified train/test
//! assignment and trimmed variants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{seeded_hash, unit_interval};
use crate::paper::ParsedPaper;

/// One corpus record: metadata plus the plain-text body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manuscript {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    pub authors: Vec<String>,
    #[serde(default)]
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AuthorLabel {
    pub canonical_name: String,
    /// Zero when disambiguation found a single physical person.
    pub cluster_index: u32,
    pub paper_count: usize,
}

impl AuthorLabel {
    pub fn new(name: impl Into<String>, paper_count: usize) -> Self {
        Self {
            canonical_name: name.into(),
            cluster_index: 0,
            paper_count,
        }
    }
}

/// `D<P>[T<xx>][-C]`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DatasetName {
    pub min_papers: usize,
    pub trim: Option<usize>,
    pub chunked: bool,
}

impl DatasetName {
    pub fn new(min_papers: usize, chunked: bool) -> Self {
        Self {
            min_papers,
            trim: None,
            chunked,
        }
    }

    pub fn trimmed(self, cap: usize) -> Self {
        Self {
            trim: Some(cap),
            ..self
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.min_papers)?;
        if let Some(t) = self.trim {
            write!(f, "T{t}")?;
        }
        if self.chunked {
            f.write_str("-C")?;
        }
        Ok(())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::format("dataset name", format!("`{s}` is not of the form D<P>[T<xx>][-C]"));
        let (body, chunked) = match s.strip_suffix("-C") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let body = body.strip_prefix('D').ok_or_else(bad)?;
        let (p, trim) = match body.split_once('T') {
            Some((p, t)) => (p, Some(t.parse().map_err(|_| bad())?)),
            None => (body, None),
        };
        Ok(Self {
            min_papers: p.parse().map_err(|_| bad())?,
            trim,
            chunked,
        })
    }
}

impl Serialize for DatasetName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub paper: ParsedPaper,
    /// The single label the paper is trained on.
    pub label: usize,
    /// All dataset authors of the paper, sorted.
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSample {
    pub paper: ParsedPaper,
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: DatasetName,
    pub labels: Vec<AuthorLabel>,
    pub train: Vec<TrainSample>,
    pub test: Vec<TestSample>,
    pub chunked: bool,
    pub seed: u64,
    /// Authors whose test share could not be kept within rounding of the
    /// target ratio because of co-authored papers.
    pub ratio_drift: Vec<String>,
}

/// Given names reduced to initials only, e.g. `J.`, `A.B.`, `J.-P.`.
fn is_initial_token(token: &str) -> bool {
    let mut pieces = 0;
    for part in token.split(['.', '-']) {
        if part.is_empty() {
            continue;
        }
        if part.chars().count() != 1 || !part.chars().all(|c| c.is_ascii_alphabetic()) {
            return false;
        }
        pieces += 1;
    }
    pieces > 0
}

/// True when every given-name token of `name` is an initial.
pub fn has_only_initials(name: &str) -> bool {
    let tokens: Vec<&str> = name.split_whitespace().collect();
    match tokens.split_last() {
        Some((_, given)) if !given.is_empty() => given.iter().all(|t| is_initial_token(t)),
        _ => false,
    }
}

/// Drops manuscripts where any author is listed with initials only.
pub fn filter_full_names(corpus: Vec<Manuscript>) -> Vec<Manuscript> {
    corpus
        .into_iter()
        .filter(|m| !m.authors.iter().any(|a| has_only_initials(a)))
        .collect()
}

fn unique_authors(m: &Manuscript) -> BTreeSet<&str> {
    m.authors.iter().map(|a| a.trim()).filter(|a| !a.is_empty()).collect()
}

/// Authors with at least `min_papers` (co-)authored manuscripts, by name.
pub fn select_authors(corpus: &[Manuscript], min_papers: usize) -> Result<Vec<AuthorLabel>> {
    if min_papers == 0 {
        return Err(Error::config("min_papers", "must be at least 1"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for m in corpus {
        for a in unique_authors(m) {
            *counts.entry(a).or_default() += 1;
        }
    }
    Ok(counts
        .into_iter()
        .filter(|&(_, n)| n >= min_papers)
        .map(|(name, n)| AuthorLabel::new(name, n))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Train,
    Test,
}

/// Train/test decision for every paper of a labeled collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub side: Vec<Side>,
    /// Label used for training; `None` for test papers.
    pub train_label: Vec<Option<usize>>,
    /// Labels whose test count lies outside floor/ceil of `ratio * n`.
    pub drift: Vec<usize>,
}

/// floor and ceil of `ratio * n`, robust to representation error.
pub fn test_bounds(n: usize, ratio: f64) -> (usize, usize) {
    let x = ratio * n as f64;
    let lo = (x + 1e-9).floor() as usize;
    let hi = (x - 1e-9).ceil().max(0.0) as usize;
    (lo.min(hi), hi.max(lo))
}

struct SplitState<'a> {
    label_sets: &'a [Vec<usize>],
    forced_train: Vec<bool>,
    side: Vec<Side>,
    test_count: Vec<usize>,
    lo: Vec<usize>,
    hi: Vec<usize>,
    by_label: Vec<Vec<usize>>,
}

impl SplitState<'_> {
    fn set(&mut self, p: usize, side: Side) {
        if self.side[p] == side {
            return;
        }
        for &a in &self.label_sets[p] {
            match side {
                Side::Test => self.test_count[a] += 1,
                Side::Train => self.test_count[a] -= 1,
            }
        }
        self.side[p] = side;
    }

    fn can_add(&self, p: usize) -> bool {
        !self.forced_train[p]
            && self.side[p] == Side::Train
            && self.label_sets[p].iter().all(|&a| self.test_count[a] < self.hi[a])
    }

    fn can_remove(&self, p: usize) -> bool {
        self.side[p] == Side::Test && self.label_sets[p].iter().all(|&a| self.test_count[a] > self.lo[a])
    }

    fn ok(&self, a: usize) -> bool {
        (self.lo[a]..=self.hi[a]).contains(&self.test_count[a])
    }

    fn labels_ok(&self, papers: &[usize]) -> bool {
        papers
            .iter()
            .flat_map(|&p| self.label_sets[p].iter())
            .all(|&a| self.ok(a))
    }

    /// One improvement attempt for author `a`; true when something moved.
    fn repair(&mut self, a: usize) -> bool {
        let papers = self.by_label[a].clone();
        if self.test_count[a] < self.lo[a] {
            if let Some(&p) = papers.iter().find(|&&p| self.can_add(p)) {
                self.set(p, Side::Test);
                return true;
            }
            // Swap: move p to test while moving a blocking co-author's test
            // paper q back to train.
            for &p in &papers {
                if self.forced_train[p] || self.side[p] != Side::Train {
                    continue;
                }
                let blockers: Vec<usize> = self.label_sets[p]
                    .iter()
                    .copied()
                    .filter(|&b| b != a && self.test_count[b] >= self.hi[b])
                    .collect();
                let [b] = blockers[..] else { continue };
                for &q in &self.by_label[b].clone() {
                    if self.side[q] != Side::Test || self.label_sets[q].contains(&a) {
                        continue;
                    }
                    self.set(q, Side::Train);
                    self.set(p, Side::Test);
                    let touched: Vec<usize> = self.label_sets[q]
                        .iter()
                        .chain(self.label_sets[p].iter())
                        .copied()
                        .filter(|&c| c != a)
                        .collect();
                    if touched.iter().all(|&c| self.ok(c)) {
                        return true;
                    }
                    self.set(p, Side::Train);
                    self.set(q, Side::Test);
                }
            }
        } else if self.test_count[a] > self.hi[a] {
            if let Some(&p) = papers.iter().find(|&&p| self.can_remove(p)) {
                self.set(p, Side::Train);
                return true;
            }
            for &p in &papers {
                if self.side[p] != Side::Test {
                    continue;
                }
                let blockers: Vec<usize> = self.label_sets[p]
                    .iter()
                    .copied()
                    .filter(|&b| b != a && self.test_count[b] <= self.lo[b])
                    .collect();
                let [b] = blockers[..] else { continue };
                for &q in &self.by_label[b].clone() {
                    if self.side[q] != Side::Train
                        || self.forced_train[q]
                        || self.label_sets[q].contains(&a)
                    {
                        continue;
                    }
                    self.set(p, Side::Train);
                    self.set(q, Side::Test);
                    if self.labels_ok(&[q]) && self.ok(b) {
                        return true;
                    }
                    self.set(q, Side::Train);
                    self.set(p, Side::Test);
                }
            }
        }
        false
    }
}

/// Stratified split of labeled papers.
///
/// Each paper lands on exactly one side. Per label, the number of test papers
/// is kept within floor/ceil of `ratio * n`; labels where co-authorship makes
/// that impossible for the search are reported in `drift`. Labels with fewer
/// than two papers keep all of their papers in train.
pub fn assign_split(
    ids: &[String],
    label_sets: &[Vec<usize>],
    n_labels: usize,
    ratio: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config("ratio", "must lie strictly between 0 and 1"));
    }
    if ids.len() != label_sets.len() {
        return Err(Error::config("papers", "ids and label sets differ in length"));
    }
    for (id, labels) in ids.iter().zip(label_sets) {
        if labels.is_empty() {
            return Err(Error::config("papers", format!("paper {id} carries no label")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_labels) {
            return Err(Error::config("papers", format!("paper {id} has label {bad} outside the label space")));
        }
    }

    let n_papers = ids.len();
    let mut n_per_label = vec![0usize; n_labels];
    let mut by_label = vec![Vec::new(); n_labels];
    // Visiting order is a pure function of (id, seed).
    let mut order: Vec<usize> = (0..n_papers).collect();
    order.sort_by_key(|&p| (seeded_hash(seed, ids[p].as_bytes()), p));
    for &p in &order {
        for &a in &label_sets[p] {
            n_per_label[a] += 1;
            by_label[a].push(p);
        }
    }
    let (lo, hi): (Vec<usize>, Vec<usize>) = n_per_label.iter().map(|&n| test_bounds(n, ratio)).unzip();
    let forced_train: Vec<bool> = label_sets
        .iter()
        .map(|ls| ls.iter().any(|&a| n_per_label[a] < 2))
        .collect();
    let target: Vec<usize> = (0..n_labels)
        .map(|a| {
            if lo[a] == hi[a] {
                lo[a]
            } else {
                let frac = ratio * n_per_label[a] as f64 - lo[a] as f64;
                let u = unit_interval(seed ^ 0x7a67_6574, &(a as u64).to_le_bytes());
                if u < frac {
                    hi[a]
                } else {
                    lo[a]
                }
            }
        })
        .collect();

    let mut state = SplitState {
        label_sets,
        forced_train,
        side: vec![Side::Train; n_papers],
        test_count: vec![0; n_labels],
        lo,
        hi,
        by_label,
    };

    // Co-authored papers first: one test paper serves several labels.
    for multi in [true, false] {
        for &p in &order {
            if (label_sets[p].len() > 1) != multi || state.forced_train[p] {
                continue;
            }
            if label_sets[p].iter().all(|&a| state.test_count[a] < target[a]) {
                state.set(p, Side::Test);
            }
        }
    }

    let max_rounds = 4 * n_papers + 16;
    for _ in 0..max_rounds {
        let mut moved = false;
        for a in 0..n_labels {
            if !state.ok(a) {
                moved |= state.repair(a);
            }
        }
        if !moved {
            break;
        }
    }

    let drift: Vec<usize> = (0..n_labels).filter(|&a| !state.ok(a)).collect();
    let train_label = (0..n_papers)
        .map(|p| match state.side[p] {
            Side::Test => None,
            Side::Train => {
                let ls = &label_sets[p];
                let pick = seeded_hash(seed ^ 0x6c61_6265_6c00, ids[p].as_bytes()) as usize % ls.len();
                Some(ls[pick])
            }
        })
        .collect();
    Ok(SplitAssignment {
        side: state.side,
        train_label,
        drift,
    })
}

/// Builds a bundle from labeled papers with a stratified split.
pub fn split_dataset(
    papers: Vec<(ParsedPaper, Vec<usize>)>,
    labels: Vec<AuthorLabel>,
    name: DatasetName,
    ratio: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    let mut papers: Vec<(ParsedPaper, Vec<usize>)> = papers
        .into_iter()
        .map(|(p, mut ls)| {
            ls.sort_unstable();
            ls.dedup();
            (p, ls)
        })
        .collect();
    papers.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    if let Some(w) = papers.windows(2).find(|w| w[0].0.id == w[1].0.id) {
        return Err(Error::config("papers", format!("duplicate paper id {}", w[0].0.id)));
    }
    let ids: Vec<String> = papers.iter().map(|(p, _)| p.id.clone()).collect();
    let sets: Vec<Vec<usize>> = papers.iter().map(|(_, l)| l.clone()).collect();
    let assignment = assign_split(&ids, &sets, labels.len(), ratio, seed)?;
    for a in &assignment.drift {
        log::warn!("test share of author {} drifts outside 80/20 rounding", labels[*a].canonical_name);
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((paper, gold), label) in papers.into_iter().zip(assignment.train_label) {
        match label {
            Some(label) => train.push(TrainSample { paper, label, gold }),
            None => test.push(TestSample { paper, gold }),
        }
    }
    let mut labels = labels;
    recount(&mut labels, &train, &test);
    Ok(DatasetBundle {
        name,
        ratio_drift: assignment.drift.iter().map(|&a| labels[a].canonical_name.clone()).collect(),
        labels,
        train,
        test,
        chunked: name.chunked,
        seed,
    })
}

fn recount(labels: &mut [AuthorLabel], train: &[TrainSample], test: &[TestSample]) {
    let mut counts = vec![0usize; labels.len()];
    for g in train.iter().map(|s| &s.gold).chain(test.iter().map(|s| &s.gold)) {
        for &a in g {
            counts[a] += 1;
        }
    }
    for (l, n) in labels.iter_mut().zip(counts) {
        l.paper_count = n;
    }
}

/// Caps the number of papers per author, keeping the test share of every
/// author within rounding of `ratio`.
pub fn trim_dataset(bundle: DatasetBundle, max_papers_per_author: usize, ratio: f64, seed: u64) -> Result<DatasetBundle> {
    if max_papers_per_author < 2 {
        return Err(Error::config("trim", "must be at least 2"));
    }
    let DatasetBundle {
        name,
        labels,
        train,
        test,
        chunked,
        seed: bundle_seed,
        ..
    } = bundle;
    let n_labels = labels.len();

    // (paper, gold, side, train label)
    let mut items: Vec<(ParsedPaper, Vec<usize>, Side, Option<usize>)> = train
        .into_iter()
        .map(|s| (s.paper, s.gold, Side::Train, Some(s.label)))
        .chain(test.into_iter().map(|s| (s.paper, s.gold, Side::Test, None)))
        .collect();
    items.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    let mut keep = vec![true; items.len()];
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| (seeded_hash(seed ^ 0x7472_696d, items[i].0.id.as_bytes()), i));

    let (cap_lo, cap_hi) = test_bounds(max_papers_per_author, ratio);
    for a in 0..n_labels {
        let count = |keep: &[bool], side: Side| {
            order
                .iter()
                .filter(|&&i| keep[i] && items[i].2 == side && items[i].1.contains(&a))
                .count()
        };
        let total = count(&keep, Side::Train) + count(&keep, Side::Test);
        if total <= max_papers_per_author {
            continue;
        }
        let frac = ratio * max_papers_per_author as f64 - cap_lo as f64;
        let u = unit_interval(seed ^ 0x7472_696d, &(a as u64).to_le_bytes());
        let test_target = if u < frac { cap_hi } else { cap_lo };
        let train_target = max_papers_per_author - test_target;
        for (side, target) in [(Side::Test, test_target), (Side::Train, train_target)] {
            let mut excess = count(&keep, side).saturating_sub(target);
            // Drop papers of this author alone before shared ones.
            for single_first in [true, false] {
                for &i in &order {
                    if excess == 0 {
                        break;
                    }
                    let item = &items[i];
                    if keep[i] && item.2 == side && item.1.contains(&a) && ((item.1.len() == 1) == single_first) {
                        keep[i] = false;
                        excess -= 1;
                    }
                }
            }
        }
    }

    let kept: Vec<_> = items
        .into_iter()
        .zip(keep)
        .filter_map(|(item, k)| k.then_some(item))
        .collect();

    // Restore per-author rounding where removals of shared papers broke it.
    let ids: Vec<String> = kept.iter().map(|i| i.0.id.clone()).collect();
    let sets: Vec<Vec<usize>> = kept.iter().map(|i| i.1.clone()).collect();
    let mut n_per_label = vec![0usize; n_labels];
    let mut by_label = vec![Vec::new(); n_labels];
    for (p, s) in sets.iter().enumerate() {
        for &a in s {
            n_per_label[a] += 1;
            by_label[a].push(p);
        }
    }
    for list in &mut by_label {
        list.sort_by_key(|&p| (seeded_hash(seed ^ 0x7472_696d, ids[p].as_bytes()), p));
    }
    let (lo, hi): (Vec<usize>, Vec<usize>) = n_per_label.iter().map(|&n| test_bounds(n, ratio)).unzip();
    let mut test_count = vec![0usize; n_labels];
    for item in &kept {
        if item.2 == Side::Test {
            for &a in &item.1 {
                test_count[a] += 1;
            }
        }
    }
    let mut state = SplitState {
        label_sets: &sets,
        forced_train: sets.iter().map(|ls| ls.iter().any(|&a| n_per_label[a] < 2)).collect(),
        side: kept.iter().map(|i| i.2).collect(),
        test_count,
        lo,
        hi,
        by_label,
    };
    for p in 0..sets.len() {
        if state.forced_train[p] {
            state.set(p, Side::Train);
        }
    }
    for _ in 0..4 * sets.len() + 16 {
        let mut moved = false;
        for a in 0..n_labels {
            if !state.ok(a) {
                moved |= state.repair(a);
            }
        }
        if !moved {
            break;
        }
    }
    let drift: Vec<usize> = (0..n_labels).filter(|&a| !state.ok(a)).collect();
    let sides = state.side.clone();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((paper, gold, _, label), side) in kept.into_iter().zip(sides) {
        match side {
            Side::Train => {
                let label = label.filter(|l| gold.contains(l)).unwrap_or_else(|| {
                    let pick = seeded_hash(bundle_seed ^ 0x6c61_6265_6c00, paper.id.as_bytes()) as usize % gold.len();
                    gold[pick]
                });
                train.push(TrainSample { paper, label, gold });
            }
            Side::Test => test.push(TestSample { paper, gold }),
        }
    }
    let mut labels = labels;
    recount(&mut labels, &train, &test);
    Ok(DatasetBundle {
        name: name.trimmed(max_papers_per_author),
        ratio_drift: drift.iter().map(|&a| labels[a].canonical_name.clone()).collect(),
        labels,
        train,
        test,
        chunked,
        seed: bundle_seed,
    })
}
