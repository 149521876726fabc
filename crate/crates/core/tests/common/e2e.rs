//! End-to-end runs over synthetic corpora.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use authattr::model::Mode;
use authattr::pipeline::{cmd_build, cmd_eval, cmd_synth, cmd_train, BuildOptions, EvalOptions, TrainOptions};
use authattr::synth::SmokeConfig;

/// Every file below `dir`, keyed by its relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Three authors with thirty papers each.
pub fn small_config(seed: u64) -> SmokeConfig {
    SmokeConfig {
        seed,
        authors: 3,
        papers_per_author: 30,
        ambiguous_names: 0,
        malformed: 2,
        initials_only: 2,
        ..SmokeConfig::default()
    }
}

/// synth, build, train and eval into `dir` with one worker.
pub fn build_train_eval(dir: &Path, cfg: &SmokeConfig, mode: Mode) {
    let corpus = cmd_synth(&dir.join("corpus"), cfg).unwrap();
    let ds = dir.join("dataset");
    let mut b = BuildOptions::new(&corpus, &ds, 10);
    b.min_count = 2;
    b.workers = 1;
    cmd_build(&b).unwrap();
    let ckpt = dir.join("model.ckpt");
    let mut t = TrainOptions::new(&ds, &ckpt, mode);
    t.min_count = 2;
    t.epochs = Some(2);
    t.workers = 1;
    cmd_train(&t).unwrap();
    let mut e = EvalOptions::new(&ckpt, &ds, dir.join("eval"));
    e.workers = 1;
    cmd_eval(&e).unwrap();
}

/// Relative paths whose bytes differ between two runs, or exist in one only.
pub fn determinism_diff(root: &Path, cfg: &SmokeConfig) -> (usize, Vec<PathBuf>) {
    let (a, b) = (root.join("run-a"), root.join("run-b"));
    build_train_eval(&a, cfg, Mode::RefCont);
    build_train_eval(&b, cfg, Mode::RefCont);
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    let mut diff: Vec<PathBuf> = ta.iter().filter(|(k, v)| tb.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect();
    diff.extend(tb.keys().filter(|k| !ta.contains_key(*k)).cloned());
    (ta.len(), diff)
}

pub struct Smoke {
    /// Top-1 accuracy keyed by `<dataset>/<mode>`.
    pub accuracy: BTreeMap<String, f64>,
    pub labels: usize,
    pub discarded: Vec<String>,
    pub elapsed: Duration,
}

impl Smoke {
    pub fn get(&self, key: &str) -> f64 {
        self.accuracy[key]
    }
}

/// Vocabulary threshold for the smoke corpus, scaled down from the default
/// because each author has only a hundred papers.
pub const SMOKE_MIN_COUNT: usize = 5;

/// Seven authors, a hundred papers each, one shared name; trains every mode
/// on the first-chunk dataset and the content modes on the chunked one.
pub fn smoke(dir: &Path, cfg: &SmokeConfig) -> Smoke {
    let start = Instant::now();
    let corpus = cmd_synth(&dir.join("corpus"), cfg).unwrap();
    let mut accuracy = BTreeMap::new();
    let mut labels = 0;
    let mut discarded = Vec::new();
    for chunked in [false, true] {
        let name = if chunked { "D50-C" } else { "D50" };
        let ds = dir.join(name);
        let mut b = BuildOptions::new(&corpus, &ds, 50);
        b.chunked = chunked;
        b.min_count = SMOKE_MIN_COUNT;
        let summary = cmd_build(&b).unwrap();
        if !chunked {
            labels = summary.labels;
            discarded = summary.discarded_authors;
        }
        let modes: &[Mode] = if chunked {
            &[Mode::Content, Mode::RefCont]
        } else {
            &[Mode::Content, Mode::References, Mode::RefNoSelf, Mode::RefCont]
        };
        for &mode in modes {
            let ckpt = ds.join(format!("{}.ckpt", mode.as_str()));
            let mut t = TrainOptions::new(&ds, &ckpt, mode);
            t.min_count = SMOKE_MIN_COUNT;
            cmd_train(&t).unwrap();
            let report = cmd_eval(&EvalOptions::new(&ckpt, &ds, ds.join(format!("eval-{}", mode.as_str())))).unwrap();
            accuracy.insert(format!("{name}/{}", mode.as_str()), report.overall.m1);
        }
    }
    Smoke {
        accuracy,
        labels,
        discarded,
        elapsed: start.elapsed(),
    }
}
