//! Independent reference implementations used to check the library.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use authattr::disambig::{dbscan, DbscanParams, Metric, NOISE};
use authattr::evaluate::{self, PaperPrediction};
use authattr::features::{RheParams, RHE_OUT};
use authattr::ingest::{self, AuthorLabel, DatasetBundle, DatasetName};
use authattr::model::{Example, FusionModel, Input, ModelConfig, Mode};
use authattr::nn::Dense;
use authattr::paper::ParsedPaper;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- forward

fn matrix(d: &Dense) -> Vec<Vec<f64>> {
    d.weight.chunks(d.inputs).map(<[f64]>::to_vec).collect()
}

fn affine(d: &Dense, x: &[f64]) -> Vec<f64> {
    let w = matrix(d);
    let mut y = d.bias.clone();
    for (row, out) in w.iter().zip(y.iter_mut()) {
        for (wij, xj) in row.iter().zip(x) {
            *out += wij * xj;
        }
    }
    y
}

fn rectify(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect()
}

pub fn naive_rhe(h: &[f64], p: &RheParams) -> Vec<f64> {
    affine(&p.output, &rectify(affine(&p.hidden, h)))
}

pub fn naive_forward(model: &FusionModel, input: &Input) -> Vec<f64> {
    let c = &model.config;
    let text = if !c.use_content {
        vec![0.0; c.d_text]
    } else if let Some(p) = &model.projection {
        affine(p, &input.text)
    } else {
        input.text.clone()
    };
    let refs = if c.use_references {
        naive_rhe(&input.hist, &model.rhe)
    } else {
        vec![0.0; c.rhe_out]
    };
    let joint: Vec<f64> = text.into_iter().chain(refs).collect();
    affine(&model.head_output, &rectify(affine(&model.head_hidden, &joint)))
}

pub fn naive_loss(model: &FusionModel, batch: &[Example]) -> f64 {
    let mut total = 0.0;
    for ex in batch {
        let z = naive_forward(model, &ex.input);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[ex.label];
    }
    total / batch.len() as f64
}

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Small model with random shape, random modalities and random inputs.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (FusionModel, Vec<Example>) {
    let mode = *[Mode::Content, Mode::References, Mode::RefCont].choose(rng).unwrap();
    let d_text = rng.gen_range(1..=5);
    let n_hist = rng.gen_range(1..=7);
    let n_labels = rng.gen_range(2..=4);
    let mut config = ModelConfig::new(mode, d_text, n_hist, n_labels);
    config.rhe_out = rng.gen_range(1..=4);
    config.hidden = rng.gen_range(1..=6);
    config.text_projection = rng.gen_bool(0.5);
    let mut model = FusionModel::init(config, rng.gen()).unwrap();
    // Nonzero biases so every parameter group is exercised.
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let batch = (0..rng.gen_range(1..=3))
        .map(|_| Example {
            input: Input {
                text: (0..d_text).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                hist: (0..n_hist).map(|_| rng.gen_range(0..4) as f64).collect(),
            },
            label: rng.gen_range(0..n_labels),
        })
        .collect();
    (model, batch)
}

pub struct ForwardCheck {
    pub instances: usize,
    pub max_rel: f64,
}

pub fn forward_check(instances: usize, seed: u64) -> ForwardCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    for i in 0..instances {
        let (model, batch) = if i % 4 == 3 {
            wide_instance(&mut rng)
        } else {
            random_instance(&mut rng)
        };
        for ex in &batch {
            let got = model.forward(&ex.input).unwrap();
            let want = naive_forward(&model, &ex.input);
            for (a, b) in got.iter().zip(&want) {
                max_rel = max_rel.max(relative(*a, *b, 1e-9));
            }
            if model.config.use_references {
                let got = authattr::features::rhe_forward(&ex.input.hist, &model.rhe).unwrap();
                for (a, b) in got.iter().zip(naive_rhe(&ex.input.hist, &model.rhe)) {
                    max_rel = max_rel.max(relative(*a, b, 1e-9));
                }
            }
        }
    }
    ForwardCheck { instances, max_rel }
}

/// Production-sized widths: default RHE output, a 64-entry histogram.
fn wide_instance(rng: &mut ChaCha8Rng) -> (FusionModel, Vec<Example>) {
    let config = ModelConfig::new(Mode::RefCont, 32, 64, 7);
    assert_eq!(config.rhe_out, RHE_OUT);
    let model = FusionModel::init(config, rng.gen()).unwrap();
    let batch = (0..2)
        .map(|_| Example {
            input: Input {
                text: (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                hist: (0..64).map(|_| rng.gen_range(0..6) as f64).collect(),
            },
            label: rng.gen_range(0..7),
        })
        .collect();
    (model, batch)
}

// -------------------------------------------------------------- gradients

pub struct GradCheck {
    pub models: usize,
    pub checked: usize,
    /// Coordinates skipped because a ReLU changed state within `±h`.
    pub kinks: usize,
    pub max_rel: f64,
    pub elapsed: Duration,
}

pub const FD_STEP: f64 = 1e-4;

/// Central finite differences on the oracle loss against backprop.
pub fn gradient_check(models: usize, seed: u64) -> GradCheck {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck {
        models,
        checked: 0,
        kinks: 0,
        max_rel: 0.0,
        elapsed: Duration::ZERO,
    };
    for _ in 0..models {
        let (model, batch) = random_instance(&mut rng);
        let (_, grad) = model.gradients(&batch).unwrap();
        let pattern = model.activation_pattern(&batch).unwrap();
        let analytic: Vec<f64> = grad.tensors().into_iter().flatten().copied().collect();
        let mut k = 0;
        let n_tensors = model.tensors().len();
        for t in 0..n_tensors {
            let len = model.tensors()[t].len();
            for j in 0..len {
                let mut plus = model.clone();
                plus.tensors_mut()[t][j] += FD_STEP;
                let mut minus = model.clone();
                minus.tensors_mut()[t][j] -= FD_STEP;
                let stable = plus.activation_pattern(&batch).unwrap() == pattern
                    && minus.activation_pattern(&batch).unwrap() == pattern;
                if stable {
                    let numeric = (naive_loss(&plus, &batch) - naive_loss(&minus, &batch)) / (2.0 * FD_STEP);
                    out.max_rel = out.max_rel.max(relative(analytic[k], numeric, 1e-6));
                    out.checked += 1;
                } else {
                    out.kinks += 1;
                }
                k += 1;
            }
        }
    }
    out.elapsed = start.elapsed();
    out
}

// ----------------------------------------------------------------- DBSCAN

#[derive(Debug, Clone)]
pub struct DbscanFixture {
    pub points: Vec<Vec<f64>>,
    pub params: DbscanParams,
}

fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force density reachability. Coordinates and eps are chosen so
/// squared distances compare exactly.
pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let eps2 = eps * eps;
    let near = |i: usize, j: usize| squared(&points[i], &points[j]) <= eps2;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    // reach[i][j]: j is density-reachable from core point i through core points
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| core[i] && core[j] && near(i, j)).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                let via = reach[k].clone();
                for (r, v) in reach[i].iter_mut().zip(via) {
                    *r |= v;
                }
            }
        }
    }
    // representative of a core point: smallest reachable core index
    let rep: Vec<Option<usize>> = (0..n)
        .map(|i| core[i].then(|| (0..n).find(|&j| j == i || reach[i][j]).unwrap()))
        .collect();
    let owner: Vec<Option<usize>> = (0..n)
        .map(|i| {
            if core[i] {
                return rep[i];
            }
            let mut best: Option<usize> = None;
            for j in (0..n).filter(|&j| core[j] && near(i, j)) {
                best = Some(match best {
                    None => j,
                    Some(b) => {
                        let (dj, db) = (squared(&points[i], &points[j]), squared(&points[i], &points[b]));
                        let closer = dj < db || (dj == db && points[j].partial_cmp(&points[b]) == Some(std::cmp::Ordering::Less));
                        if closer { j } else { b }
                    }
                });
            }
            best.and_then(|b| rep[b])
        })
        .collect();
    let mut ids: BTreeMap<usize, i32> = BTreeMap::new();
    let mut next = 0;
    let mut labels = Vec::with_capacity(n);
    for o in owner {
        labels.push(match o {
            None => NOISE,
            Some(r) => *ids.entry(r).or_insert_with(|| {
                next += 1;
                next - 1
            }),
        });
    }
    // first-occurrence numbering
    let mut remap: BTreeMap<i32, i32> = BTreeMap::new();
    let mut k = 0;
    labels
        .into_iter()
        .map(|l| {
            if l == NOISE {
                return NOISE;
            }
            *remap.entry(l).or_insert_with(|| {
                k += 1;
                k - 1
            })
        })
        .collect()
}

/// Integer-lattice blobs with duplicates and exact-distance ties.
pub fn dbscan_fixtures(count: usize, seed: u64) -> Vec<DbscanFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps_choices = [1.0, 1.5, 2.0, 3.0, 4.5, 6.0];
    (0..count)
        .map(|i| {
            let n = match i {
                0 => 0,
                1 => 1,
                2 => 200,
                _ => rng.gen_range(2..=200),
            };
            let dim = rng.gen_range(1..=3);
            let centres: Vec<Vec<i32>> = (0..rng.gen_range(1..=5))
                .map(|_| (0..dim).map(|_| rng.gen_range(0..60)).collect())
                .collect();
            let spread = rng.gen_range(1..=6);
            let points = (0..n)
                .map(|_| {
                    let c = centres.choose(&mut rng).unwrap();
                    if rng.gen_bool(0.1) {
                        (0..dim).map(|_| rng.gen_range(0..60) as f64).collect()
                    } else {
                        c.iter().map(|&x| (x + rng.gen_range(-spread..=spread)) as f64).collect()
                    }
                })
                .collect();
            DbscanFixture {
                points,
                params: DbscanParams {
                    eps: *eps_choices.choose(&mut rng).unwrap(),
                    min_pts: rng.gen_range(1..=6),
                    metric: Metric::Euclidean,
                },
            }
        })
        .collect()
}

pub struct DbscanCheck {
    pub fixtures: usize,
    pub mismatches: usize,
    pub shuffles: usize,
    pub permutation_failures: usize,
}

/// Clusters as sets of original indices, plus the noise set.
fn partition(labels: &[i32], index: &[usize]) -> (BTreeSet<BTreeSet<usize>>, BTreeSet<usize>) {
    let mut groups: BTreeMap<i32, BTreeSet<usize>> = BTreeMap::new();
    let mut noise = BTreeSet::new();
    for (&l, &i) in labels.iter().zip(index) {
        if l == NOISE {
            noise.insert(i);
        } else {
            groups.entry(l).or_default().insert(i);
        }
    }
    (groups.into_values().collect(), noise)
}

pub fn dbscan_check(fixtures: &[DbscanFixture], shuffles: usize, seed: u64) -> DbscanCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DbscanCheck {
        fixtures: fixtures.len(),
        mismatches: 0,
        shuffles: 0,
        permutation_failures: 0,
    };
    for f in fixtures {
        let got = dbscan(&f.points, &f.params).unwrap();
        if got.labels != dbscan_oracle(&f.points, f.params.eps, f.params.min_pts) {
            out.mismatches += 1;
        }
        let identity: Vec<usize> = (0..f.points.len()).collect();
        let reference = partition(&got.labels, &identity);
        for _ in 0..shuffles {
            let mut order = identity.clone();
            order.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| f.points[i].clone()).collect();
            let c = dbscan(&shuffled, &f.params).unwrap();
            out.shuffles += 1;
            if partition(&c.labels, &order) != reference {
                out.permutation_failures += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------- metrics

pub const METRIC_LABELS: usize = 5;

fn outranks(p: &[f64], a: usize, b: usize) -> bool {
    p[a] > p[b] || (p[a] == p[b] && a < b)
}

/// Labels whose rank is below `n`, counted pairwise rather than sorted.
fn top_by_count(p: &[f64], n: usize) -> BTreeSet<usize> {
    (0..p.len())
        .filter(|&a| (0..p.len()).filter(|&b| b != a && outranks(p, b, a)).count() < n)
        .collect()
}

pub fn oracle_count(p: &[f64], ratio: f64) -> usize {
    let max = p.iter().copied().fold(0.0, f64::max);
    let mut n = 0;
    for &x in p {
        if x >= ratio * max {
            n += 1;
        }
    }
    n.max(1)
}

pub fn oracle_metrics(p: &[f64], gold: &BTreeSet<usize>, ratio: f64, k: usize) -> [bool; 4] {
    let first = (0..p.len()).find(|&a| (0..p.len()).all(|b| b == a || outranks(p, a, b)));
    [
        first.is_some_and(|a| gold.contains(&a)),
        top_by_count(p, gold.len()) == *gold,
        top_by_count(p, oracle_count(p, ratio)) == *gold,
        gold.iter().all(|g| top_by_count(p, k).contains(g)),
    ]
}

/// Random probability vectors; every third one is built from a few integer
/// weights so ties are common.
pub fn probability_vectors(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let raw: Vec<f64> = if i % 3 == 0 {
                (0..METRIC_LABELS).map(|_| rng.gen_range(0..4) as f64).collect()
            } else {
                (0..METRIC_LABELS).map(|_| rng.gen::<f64>().powi(3)).collect()
            };
            let total: f64 = raw.iter().sum();
            if total == 0.0 {
                vec![1.0 / METRIC_LABELS as f64; METRIC_LABELS]
            } else {
                raw.iter().map(|x| x / total).collect()
            }
        })
        .collect()
}

pub fn gold_subsets() -> Vec<BTreeSet<usize>> {
    (1u32..1 << METRIC_LABELS)
        .map(|mask| (0..METRIC_LABELS).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

pub struct MetricCheck {
    pub samples: usize,
    pub mismatches: usize,
    pub implication_failures: usize,
}

pub fn metric_check(vectors: usize, seed: u64) -> MetricCheck {
    let mut out = MetricCheck {
        samples: 0,
        mismatches: 0,
        implication_failures: 0,
    };
    let ratios = [0.0, 0.1, 0.5, 1.0];
    for (i, p) in probability_vectors(vectors, seed).into_iter().enumerate() {
        let pred = PaperPrediction {
            paper_id: String::new(),
            logits: Vec::new(),
            ranked: evaluate::rank(&p),
            probabilities: p.clone(),
        };
        let ratio = ratios[i % ratios.len()];
        let k = 1 + i % METRIC_LABELS;
        if evaluate::estimate_author_count(&pred, ratio) != oracle_count(&p, ratio) {
            out.mismatches += 1;
        }
        for gold in gold_subsets() {
            out.samples += 1;
            let got = [
                evaluate::metric1(&pred, &gold),
                evaluate::metric2(&pred, &gold),
                evaluate::metric3(&pred, &gold, ratio),
                evaluate::metric4(&pred, &gold, k),
            ];
            if got != oracle_metrics(&p, &gold, ratio, k) {
                out.mismatches += 1;
            }
            if got[1] && !got[0] {
                out.implication_failures += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------- dataset

pub fn bare_paper(id: String, authors: Vec<String>) -> ParsedPaper {
    ParsedPaper {
        id,
        title: String::new(),
        authors,
        abstract_text: String::new(),
        chunks: Vec::new(),
        references: Vec::new(),
    }
}

/// Random labeled collection: skewed paper counts, some co-authored papers.
pub fn random_collection(rng: &mut ChaCha8Rng) -> (Vec<(ParsedPaper, Vec<usize>)>, Vec<AuthorLabel>) {
    let n_labels = rng.gen_range(1..=10);
    let coauthor_rate = [0.0, 0.1, 0.3][rng.gen_range(0..3)];
    let mut papers = Vec::new();
    for a in 0..n_labels {
        for _ in 0..rng.gen_range(1..=30) {
            let mut set = vec![a];
            if n_labels > 1 && rng.gen_bool(coauthor_rate) {
                set.push(rng.gen_range(0..n_labels));
                if rng.gen_bool(0.3) {
                    set.push(rng.gen_range(0..n_labels));
                }
            }
            let id = format!("p{:05}", papers.len());
            let names = set.iter().map(|l| format!("Author {l}")).collect();
            papers.push((bare_paper(id, names), set));
        }
    }
    papers.shuffle(rng);
    let labels = (0..n_labels).map(|l| AuthorLabel::new(format!("Author {l}"), 0)).collect();
    (papers, labels)
}

#[derive(Debug, Default)]
pub struct DatasetCheck {
    pub corpora: usize,
    pub leakage: usize,
    pub label_errors: usize,
    pub ratio_errors: usize,
    /// Authors flagged as drifting, across all corpora.
    pub flagged: usize,
    pub authors: usize,
}

/// The three bundle invariants: disjoint sides, one valid training label per
/// training paper, and a per-author test share within floor/ceil of the
/// ratio unless the author is flagged.
pub fn check_bundle(bundle: &DatasetBundle, expected_papers: usize, ratio: f64, out: &mut DatasetCheck) {
    let train: BTreeSet<&str> = bundle.train.iter().map(|s| s.paper.id.as_str()).collect();
    let test: BTreeSet<&str> = bundle.test.iter().map(|s| s.paper.id.as_str()).collect();
    if train.len() != bundle.train.len()
        || test.len() != bundle.test.len()
        || !train.is_disjoint(&test)
        || train.len() + test.len() != expected_papers
    {
        out.leakage += 1;
    }
    if bundle.train.iter().any(|s| !s.gold.contains(&s.label)) {
        out.label_errors += 1;
    }
    let n = bundle.labels.len();
    let mut total = vec![0usize; n];
    let mut in_test = vec![0usize; n];
    for s in &bundle.train {
        for &g in &s.gold {
            total[g] += 1;
        }
    }
    for s in &bundle.test {
        for &g in &s.gold {
            total[g] += 1;
            in_test[g] += 1;
        }
    }
    for l in 0..n {
        out.authors += 1;
        let name = &bundle.labels[l].canonical_name;
        if bundle.ratio_drift.contains(name) {
            out.flagged += 1;
            continue;
        }
        let (lo, hi) = ingest::test_bounds(total[l], ratio);
        let ok = (lo..=hi).contains(&in_test[l]) || (total[l] < 2 && in_test[l] == 0);
        if !ok {
            out.ratio_errors += 1;
        }
    }
}

pub fn dataset_check(corpora: usize, seed: u64) -> DatasetCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DatasetCheck::default();
    let ratio = 0.2;
    for i in 0..corpora {
        let (papers, labels) = random_collection(&mut rng);
        let mut bundle = ingest::split_dataset(papers.clone(), labels, DatasetName::new(1, false), ratio, rng.gen()).unwrap();
        let mut expected = papers.len();
        if i % 2 == 1 {
            let cap = rng.gen_range(2..=20);
            bundle = ingest::trim_dataset(bundle, cap, ratio, rng.gen()).unwrap();
            expected = bundle.train.len() + bundle.test.len();
        }
        out.corpora += 1;
        check_bundle(&bundle, expected, ratio, &mut out);
    }
    out
}
