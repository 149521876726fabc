//! End-to-end commands: build a dataset from a corpus, train, evaluate and
//! predict.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::disambig::{self, DbscanParams, TuneResult};
use crate::encoder::{EmbeddingCache, NativeEncoder, TextEncoder, NATIVE_DIM};
use crate::error::{Error, Result, Stage};
use crate::evaluate::{self, EvalSample, MetricReport, PaperPrediction};
use crate::features::{histogram, strip_own_citations, CitationVocab, DEFAULT_MIN_COUNT};
use crate::ingest::{has_only_initials, select_authors, split_dataset, trim_dataset, AuthorLabel, DatasetName, Manuscript};
use crate::model::{self, Example, FusionModel, Input, Mode, ModelConfig, TrainConfig};
use crate::paper::ParsedPaper;
use crate::preprocess::{chunk, clean_lines, filter_chunks, first_chunk_mode, segment, SegmentConfig, CHUNK_LEN, MIN_AVG_WORD_LEN};
use crate::refparse::parse_block;
use crate::sidecar::{ClientOptions, Endpoint, SidecarClient};
use crate::store::{self, AuthorVerdict, DropRecord, Manifest};
use crate::synth::{self, SmokeConfig};

pub const DEFAULT_TEST_RATIO: f64 = 0.2;

/// Which text encoder to use.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderSpec {
    Native { dim: usize, seed: u64 },
    Sidecar { endpoint: String },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Native {
            dim: NATIVE_DIM,
            seed: 0,
        }
    }
}

impl EncoderSpec {
    pub fn open(&self) -> Result<Box<dyn TextEncoder>> {
        match self {
            EncoderSpec::Native { dim, seed } => Ok(Box::new(NativeEncoder::new(*dim, *seed)?)),
            EncoderSpec::Sidecar { endpoint } => {
                let ep: Endpoint = endpoint.parse()?;
                Ok(Box::new(SidecarClient::connect(ep, ClientOptions::default())?))
            }
        }
    }

    /// Reconstructs a native encoder from its id.
    pub fn from_native_id(id: &str) -> Option<Self> {
        let rest = id.strip_prefix("native-d")?;
        let (dim, rest) = rest.split_once("-s")?;
        let (seed, grams) = rest.split_once('-')?;
        if grams != "wc" {
            return None;
        }
        Some(EncoderSpec::Native {
            dim: dim.parse().ok()?,
            seed: seed.parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub segment: SegmentConfig,
    pub chunked: bool,
    pub min_avg_word_len: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            segment: SegmentConfig::default(),
            chunked: false,
            min_avg_word_len: MIN_AVG_WORD_LEN,
        }
    }
}

/// Segments, chunks and parses one manuscript. In first-chunk mode only the
/// first chunk is kept and the word-length filter does not apply.
pub fn preprocess(m: &Manuscript, cfg: &PreprocessConfig) -> Result<ParsedPaper> {
    if m.raw_text.trim().is_empty() {
        return Err(Error::fail_fast(Stage::Text, "empty text"));
    }
    let cleaned = clean_lines(&m.raw_text);
    let seg = segment(&cleaned, &cfg.segment)?;
    let chunks = chunk(&seg.content, CHUNK_LEN)?;
    let chunks = if cfg.chunked {
        let kept = filter_chunks(chunks, cfg.min_avg_word_len);
        if kept.is_empty() {
            return Err(Error::fail_fast(Stage::Chunk, "every chunk is below the word-length threshold"));
        }
        kept
    } else {
        vec![first_chunk_mode(&chunks)?]
    };
    let references = parse_block(&seg.references_block)?;
    Ok(ParsedPaper {
        id: m.id.clone(),
        title: m.title.clone(),
        authors: m.authors.clone(),
        abstract_text: m.abstract_text.clone(),
        chunks,
        references,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub min_papers: usize,
    pub trim: Option<usize>,
    pub chunked: bool,
    pub seed: u64,
    pub test_ratio: f64,
    pub workers: usize,
    pub preprocess: PreprocessConfig,
    pub dbscan: DbscanParams,
    pub encoder: EncoderSpec,
    /// Threshold for the vocabulary written next to the bundle.
    pub min_count: usize,
}

impl BuildOptions {
    pub fn new(corpus: impl Into<PathBuf>, out: impl Into<PathBuf>, min_papers: usize) -> Self {
        Self {
            corpus: corpus.into(),
            out: out.into(),
            min_papers,
            trim: None,
            chunked: false,
            seed: 0,
            test_ratio: DEFAULT_TEST_RATIO,
            workers: 1,
            preprocess: PreprocessConfig::default(),
            dbscan: DbscanParams::default(),
            encoder: EncoderSpec::default(),
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildSummary {
    pub name: String,
    pub labels: usize,
    pub train: usize,
    pub test: usize,
    pub dropped: usize,
    pub discarded_authors: Vec<String>,
}

pub fn cmd_build(opts: &BuildOptions) -> Result<BuildSummary> {
    if !(opts.test_ratio > 0.0 && opts.test_ratio < 1.0) {
        return Err(Error::config("test_ratio", "must lie strictly between 0 and 1"));
    }
    opts.dbscan.validate()?;
    let pool = pool(opts.workers)?;
    let corpus = store::read_corpus(&opts.corpus)?;
    let n_records = corpus.manuscripts.len() + corpus.drops.len();
    let mut drops = corpus.drops;

    let mut named = Vec::with_capacity(corpus.manuscripts.len());
    for m in corpus.manuscripts {
        match m.authors.iter().find(|a| has_only_initials(a)) {
            Some(a) => {
                drops.insert(
                    m.id.clone(),
                    DropRecord {
                        stage: Stage::Names,
                        reason: format!("author `{a}` is given by initials only"),
                    },
                );
            }
            None => named.push(m),
        }
    }

    let pre = PreprocessConfig {
        chunked: opts.chunked,
        ..opts.preprocess.clone()
    };
    let outcomes: Vec<Result<ParsedPaper>> = pool.install(|| named.par_iter().map(|m| preprocess(m, &pre)).collect());
    let mut papers = Vec::new();
    for (m, outcome) in named.into_iter().zip(outcomes) {
        match outcome {
            Ok(p) => papers.push(p),
            Err(Error::FailFast { stage, reason }) => {
                drops.insert(m.id, DropRecord { stage, reason });
            }
            Err(e) => return Err(e),
        }
    }
    log::info!("{} of {n_records} records survived preprocessing", papers.len());

    let meta: Vec<Manuscript> = papers
        .iter()
        .map(|p| Manuscript {
            id: p.id.clone(),
            title: String::new(),
            abstract_text: String::new(),
            authors: p.authors.clone(),
            raw_text: String::new(),
        })
        .collect();
    let candidates = select_authors(&meta, opts.min_papers)?;
    if candidates.is_empty() {
        return Err(Error::Dataset(format!(
            "no authors met threshold of {} papers ({} usable manuscripts)",
            opts.min_papers,
            papers.len()
        )));
    }

    // Abstract embeddings for every paper of a candidate author.
    let candidate_names: BTreeSet<&str> = candidates.iter().map(|a| a.canonical_name.as_str()).collect();
    let relevant: Vec<&ParsedPaper> = papers
        .iter()
        .filter(|p| p.authors.iter().any(|a| candidate_names.contains(a.trim())))
        .collect();
    let encoder = opts.encoder.open()?;
    let embeddings: Vec<Vec<f64>> = pool.install(|| {
        relevant
            .par_iter()
            .map(|p| {
                let text = if p.abstract_text.trim().is_empty() {
                    p.chunks.first().map(|c| c.text()).unwrap_or_default()
                } else {
                    p.abstract_text.clone()
                };
                encoder.encode(&text)
            })
            .collect::<Result<_>>()
    })?;
    let by_author: BTreeMap<&str, Vec<usize>> = candidates
        .iter()
        .map(|a| {
            let idx = relevant
                .iter()
                .enumerate()
                .filter(|(_, p)| p.authors.iter().any(|n| n.trim() == a.canonical_name))
                .map(|(i, _)| i)
                .collect();
            (a.canonical_name.as_str(), idx)
        })
        .collect();
    let verdicts: Vec<(String, AuthorVerdict)> = pool.install(|| {
        candidates
            .par_iter()
            .map(|a| {
                let idx = &by_author[a.canonical_name.as_str()];
                let points: Vec<Vec<f64>> = idx.iter().map(|&i| embeddings[i].clone()).collect();
                let v = disambig::verdict(&points, &opts.dbscan)?;
                Ok((
                    a.canonical_name.clone(),
                    AuthorVerdict {
                        kept: v.unique_person,
                        papers: points.len(),
                        n_clusters: v.n_clusters,
                        n_noise: v.n_noise,
                    },
                ))
            })
            .collect::<Result<_>>()
    })?;
    let verdicts: BTreeMap<String, AuthorVerdict> = verdicts.into_iter().collect();
    let labels: Vec<AuthorLabel> = candidates.into_iter().filter(|a| verdicts[&a.canonical_name].kept).collect();
    let discarded: Vec<String> = verdicts.iter().filter(|(_, v)| !v.kept).map(|(n, _)| n.clone()).collect();
    for name in &discarded {
        log::warn!("author {name} looks like several people and is discarded");
    }
    if labels.is_empty() {
        return Err(Error::Dataset("no authors met threshold after disambiguation".into()));
    }

    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, a)| (a.canonical_name.as_str(), i)).collect();
    let mut labeled = Vec::new();
    let mut unlabeled = 0;
    for p in papers {
        let set: Vec<usize> = p.authors.iter().filter_map(|a| index.get(a.trim()).copied()).collect();
        if set.is_empty() {
            unlabeled += 1;
        } else {
            labeled.push((p, set));
        }
    }
    let labels_for_split = labels.clone();
    let name = DatasetName::new(opts.min_papers, opts.chunked);
    let mut bundle = split_dataset(labeled, labels_for_split, name, opts.test_ratio, opts.seed)?;
    if let Some(cap) = opts.trim {
        bundle = trim_dataset(bundle, cap, opts.test_ratio, opts.seed)?;
    }

    let mut manifest = Manifest::for_bundle(&bundle, opts.test_ratio);
    manifest.manuscripts = n_records;
    let dropped = drops.len();
    manifest.set_drops(drops);
    manifest.unlabeled_papers = unlabeled;
    manifest.disambiguation = verdicts;
    manifest.notes = vec![
        format!("abstract embeddings: {}", encoder.id()),
        format!(
            "dbscan: eps {} min_pts {} metric {:?}",
            opts.dbscan.eps, opts.dbscan.min_pts, opts.dbscan.metric
        ),
        "papers of discarded authors remain when they list another selected author".into(),
    ];

    prepare_dir(&opts.out)?;
    store::write_bundle(&opts.out, &bundle, &manifest)?;
    let vocab = CitationVocab::from_train_split(&bundle.train, opts.min_count);
    write(&opts.out.join("vocab.txt"), vocab.to_text().as_bytes())?;

    Ok(BuildSummary {
        name: bundle.name.to_string(),
        labels: bundle.labels.len(),
        train: bundle.train.len(),
        test: bundle.test.len(),
        dropped,
        discarded_authors: discarded,
    })
}

/// Creates `dir` and removes paper artifacts left by an earlier build.
fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let papers = dir.join("papers");
    if papers.is_dir() {
        fs::remove_dir_all(&papers).map_err(|e| Error::io(&papers, e))?;
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn cache_path(dataset: &Path, encoder_id: &str) -> PathBuf {
    dataset.join("cache").join(format!("{}.emb", store::sanitize_id(encoder_id)))
}

/// Embeds every chunk of `papers`, reusing and extending the on-disk cache.
fn chunk_embeddings(
    dataset: Option<&Path>,
    papers: &[&ParsedPaper],
    encoder: &dyn TextEncoder,
    pool: &rayon::ThreadPool,
) -> Result<EmbeddingCache> {
    let id = encoder.id();
    let path = dataset.map(|d| cache_path(d, &id));
    let mut cache = match &path {
        Some(p) if p.is_file() => {
            let c = EmbeddingCache::load(p)?;
            if c.encoder_id == id && c.dim == encoder.dim() {
                c
            } else {
                EmbeddingCache::new(&id, encoder.dim())
            }
        }
        _ => EmbeddingCache::new(&id, encoder.dim()),
    };
    let missing: Vec<(&str, u32, String)> = papers
        .iter()
        .flat_map(|p| p.chunks.iter().map(move |c| (p.id.as_str(), c.index as u32, c)))
        .filter(|(id, idx, _)| cache.get(id, *idx).is_none())
        .map(|(id, idx, c)| (id, idx, c.text()))
        .collect();
    if missing.is_empty() {
        return Ok(cache);
    }
    let vectors: Vec<Vec<f64>> =
        pool.install(|| missing.par_iter().map(|(_, _, text)| encoder.encode(text)).collect::<Result<_>>())?;
    for ((pid, idx, _), v) in missing.iter().zip(vectors) {
        cache.insert(pid, *idx, v)?;
    }
    if let Some(p) = &path {
        let dir = p.parent().unwrap();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        cache.save(p)?;
    }
    Ok(cache)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub mode: Mode,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub min_count: usize,
    pub normalize_hist: bool,
    pub encoder: EncoderSpec,
    pub workers: usize,
    pub resume: Option<PathBuf>,
}

impl TrainOptions {
    pub fn new(dataset: impl Into<PathBuf>, out: impl Into<PathBuf>, mode: Mode) -> Self {
        Self {
            dataset: dataset.into(),
            out: out.into(),
            mode,
            learning_rate: None,
            epochs: None,
            batch_size: None,
            seed: 0,
            min_count: DEFAULT_MIN_COUNT,
            normalize_hist: false,
            encoder: EncoderSpec::default(),
            workers: 1,
            resume: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub examples: usize,
    pub vocab: usize,
    pub learning_rate: f64,
    pub epoch_losses: Vec<f64>,
}

fn mode_view(paper: &ParsedPaper, mode: Mode) -> ParsedPaper {
    if mode.strips_self_citations() {
        strip_own_citations(paper)
    } else {
        paper.clone()
    }
}

pub fn cmd_train(opts: &TrainOptions) -> Result<TrainSummary> {
    let pool = pool(opts.workers)?;
    let (bundle, _) = store::read_bundle(&opts.dataset)?;
    if bundle.train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let mut cfg = TrainConfig::for_mode(opts.mode, bundle.chunked, opts.seed);
    if let Some(lr) = opts.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(e) = opts.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = opts.batch_size {
        cfg.batch_size = b;
    }
    cfg.validate()?;

    let mut train = bundle.train.clone();
    for s in &mut train {
        s.paper = mode_view(&s.paper, opts.mode);
    }
    let vocab = CitationVocab::from_train_split(&train, opts.min_count);
    let encoder = opts.encoder.open()?;
    let papers: Vec<&ParsedPaper> = train.iter().map(|s| &s.paper).collect();
    let cache = if opts.mode.uses_content() {
        Some(chunk_embeddings(Some(&opts.dataset), &papers, encoder.as_ref(), &pool)?)
    } else {
        None
    };

    let mut examples = Vec::new();
    for s in &train {
        let hist = if opts.mode.uses_references() {
            histogram(&s.paper, &vocab).to_input(opts.normalize_hist)
        } else {
            Vec::new()
        };
        match &cache {
            Some(cache) => {
                for c in &s.paper.chunks {
                    let text = cache.get(&s.paper.id, c.index as u32).expect("embedded above").to_vec();
                    examples.push(Example {
                        input: Input { text, hist: hist.clone() },
                        label: s.label,
                    });
                }
            }
            None => examples.push(Example {
                input: Input { text: Vec::new(), hist },
                label: s.label,
            }),
        }
    }

    let config = ModelConfig::new(opts.mode, encoder.dim(), vocab.len(), bundle.labels.len());
    let (model, report) = match &opts.resume {
        Some(path) => {
            let prev = Checkpoint::load(path)?;
            if prev.model.config != config || prev.meta.vocab != vocab || prev.meta.labels != bundle.labels {
                return Err(Error::config(
                    "resume",
                    "checkpoint does not match this dataset, mode, vocabulary or encoder",
                ));
            }
            let (m, mut r) = model::resume(prev.model, &examples, &cfg)?;
            let mut losses = prev.meta.report.epoch_losses;
            losses.append(&mut r.epoch_losses);
            r.epoch_losses = losses;
            (m, r)
        }
        None => model::train(config, &examples, &cfg)?,
    };
    let ckpt = Checkpoint {
        meta: CheckpointMeta {
            dataset: bundle.name.to_string(),
            chunked: bundle.chunked,
            train: cfg.clone(),
            report: report.clone(),
            labels: bundle.labels.clone(),
            vocab: vocab.clone(),
            encoder_id: encoder.id(),
            normalize_hist: opts.normalize_hist,
            optimizer: "adam beta1=0.9 beta2=0.999 eps=1e-8; softmax cross-entropy".into(),
        },
        model,
    };
    if let Some(dir) = opts.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    ckpt.save(&opts.out)?;
    Ok(TrainSummary {
        checkpoint: opts.out.clone(),
        examples: examples.len(),
        vocab: vocab.len(),
        learning_rate: cfg.learning_rate,
        epoch_losses: report.epoch_losses,
    })
}

/// Opens the encoder a checkpoint was trained with.
fn checkpoint_encoder(meta: &CheckpointMeta, sidecar: Option<&str>) -> Result<Box<dyn TextEncoder>> {
    let encoder = match (EncoderSpec::from_native_id(&meta.encoder_id), sidecar) {
        (Some(spec), _) => spec.open()?,
        (None, Some(endpoint)) => EncoderSpec::Sidecar {
            endpoint: endpoint.to_string(),
        }
        .open()?,
        (None, None) => {
            return Err(Error::config(
                "sidecar-endpoint",
                format!("checkpoint was trained with `{}`; an endpoint is required", meta.encoder_id),
            ))
        }
    };
    if encoder.id() != meta.encoder_id {
        return Err(Error::config(
            "encoder",
            format!("checkpoint expects `{}`, endpoint serves `{}`", meta.encoder_id, encoder.id()),
        ));
    }
    Ok(encoder)
}

/// Chunk-averaged prediction for one paper; `None` when it has no chunk.
fn predict_paper(
    model: &FusionModel,
    meta: &CheckpointMeta,
    paper: &ParsedPaper,
    embed: &dyn Fn(&ParsedPaper, usize) -> Result<Vec<f64>>,
    first_chunk_only: bool,
) -> Result<Option<PaperPrediction>> {
    let view = mode_view(paper, meta.train.mode);
    let hist = if model.config.use_references {
        histogram(&view, &meta.vocab).to_input(meta.normalize_hist)
    } else {
        Vec::new()
    };
    if !model.config.use_content {
        let logits = model.forward(&Input { text: Vec::new(), hist })?;
        return Ok(Some(PaperPrediction::from_logits(&paper.id, logits)));
    }
    let n = if first_chunk_only { paper.chunks.len().min(1) } else { paper.chunks.len() };
    if n == 0 {
        return Ok(None);
    }
    let mut logits = Vec::with_capacity(n);
    for i in 0..n {
        let text = embed(paper, i)?;
        logits.push(model.forward(&Input { text, hist: hist.clone() })?);
    }
    if logits.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logits for {}", paper.id)));
    }
    PaperPrediction::from_chunk_logits(&paper.id, &logits).map(Some)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub ratio: f64,
    pub top_k: usize,
    /// Score only the first stored chunk of every paper.
    pub first_chunk_only: bool,
    pub sidecar_endpoint: Option<String>,
    pub workers: usize,
}

impl EvalOptions {
    pub fn new(checkpoint: impl Into<PathBuf>, dataset: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            checkpoint: checkpoint.into(),
            dataset: dataset.into(),
            out: out.into(),
            ratio: evaluate::DEFAULT_RATIO,
            top_k: evaluate::DEFAULT_TOP_K,
            first_chunk_only: false,
            sidecar_endpoint: None,
            workers: 1,
        }
    }
}

pub fn cmd_eval(opts: &EvalOptions) -> Result<MetricReport> {
    if !(opts.ratio > 0.0 && opts.ratio <= 1.0) {
        return Err(Error::config("ratio", "must lie in (0, 1]"));
    }
    let pool = pool(opts.workers)?;
    let ckpt = Checkpoint::load(&opts.checkpoint)?;
    let (bundle, _) = store::read_bundle(&opts.dataset)?;
    if ckpt.meta.labels.len() != bundle.labels.len() {
        return Err(Error::Dataset(format!(
            "checkpoint has {} labels but dataset has {}",
            ckpt.meta.labels.len(),
            bundle.labels.len()
        )));
    }
    let ck_names: Vec<&str> = ckpt.meta.labels.iter().map(|l| l.canonical_name.as_str()).collect();
    let ds_names: Vec<&str> = bundle.labels.iter().map(|l| l.canonical_name.as_str()).collect();
    if ck_names != ds_names {
        return Err(Error::Dataset("checkpoint and dataset label names differ".into()));
    }
    if bundle.test.is_empty() {
        return Err(Error::Dataset("test split is empty".into()));
    }

    let papers: Vec<&ParsedPaper> = bundle.test.iter().map(|s| &s.paper).collect();
    let cache = if ckpt.model.config.use_content {
        let encoder = checkpoint_encoder(&ckpt.meta, opts.sidecar_endpoint.as_deref())?;
        Some(chunk_embeddings(Some(&opts.dataset), &papers, encoder.as_ref(), &pool)?)
    } else {
        None
    };
    let embed = |p: &ParsedPaper, i: usize| -> Result<Vec<f64>> {
        let c = cache.as_ref().expect("content model has a cache");
        Ok(c.get(&p.id, p.chunks[i].index as u32).expect("embedded above").to_vec())
    };
    let preds: Vec<Option<PaperPrediction>> = pool.install(|| {
        papers
            .par_iter()
            .map(|p| predict_paper(&ckpt.model, &ckpt.meta, p, &embed, opts.first_chunk_only))
            .collect::<Result<_>>()
    })?;

    let golds: Vec<BTreeSet<usize>> = bundle.test.iter().map(|s| s.gold.iter().copied().collect()).collect();
    let mut samples = Vec::new();
    let mut excluded = BTreeMap::new();
    for ((p, pred), gold) in papers.iter().zip(&preds).zip(&golds) {
        match pred {
            Some(prediction) => samples.push(EvalSample { prediction, gold }),
            None => {
                excluded.insert(p.id.clone(), "no content chunks".to_string());
            }
        }
    }
    let mut train_counts = vec![0usize; bundle.labels.len()];
    for s in &bundle.train {
        train_counts[s.label] += 1;
    }
    let names: Vec<String> = ds_names.iter().map(|s| s.to_string()).collect();
    let mut report = evaluate::report(&bundle.name.to_string(), &samples, &names, &train_counts, opts.ratio, opts.top_k)?;
    report.excluded = excluded;

    fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    write(&opts.out.join("report.txt"), report.to_text().as_bytes())?;
    let json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    write(&opts.out.join("report.json"), json.as_bytes())?;
    write(&opts.out.join("per_author.csv"), report.per_author_csv().as_bytes())?;
    write(&opts.out.join("accuracy_histogram.csv"), report.histogram_csv(10).as_bytes())?;
    let mut lines = String::new();
    for p in preds.iter().flatten() {
        lines.push_str(&serde_json::to_string(p).expect("serializable"));
        lines.push('\n');
    }
    write(&opts.out.join("predictions.jsonl"), lines.as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    pub checkpoint: PathBuf,
    pub manuscript: PathBuf,
    pub top_k: usize,
    pub ratio: f64,
    pub sidecar_endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAuthor {
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ranked: Vec<RankedAuthor>,
    pub estimated_authors: usize,
}

pub fn cmd_predict(opts: &PredictOptions) -> Result<Prediction> {
    let ckpt = Checkpoint::load(&opts.checkpoint)?;
    let bytes = fs::read(&opts.manuscript).map_err(|e| Error::io(&opts.manuscript, e))?;
    let m = Manuscript {
        id: opts
            .manuscript
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        title: String::new(),
        abstract_text: String::new(),
        authors: Vec::new(),
        raw_text: String::from_utf8_lossy(&bytes).into_owned(),
    };
    let paper = preprocess(
        &m,
        &PreprocessConfig {
            chunked: ckpt.meta.chunked,
            ..PreprocessConfig::default()
        },
    )?;
    let encoder = if ckpt.model.config.use_content {
        Some(checkpoint_encoder(&ckpt.meta, opts.sidecar_endpoint.as_deref())?)
    } else {
        None
    };
    let embed = |p: &ParsedPaper, i: usize| encoder.as_ref().expect("content model").encode(&p.chunks[i].text());
    let pred = predict_paper(&ckpt.model, &ckpt.meta, &paper, &embed, false)?
        .ok_or_else(|| Error::fail_fast(Stage::Chunk, "no content chunks"))?;
    let ranked = pred
        .ranked
        .iter()
        .take(opts.top_k)
        .map(|&i| RankedAuthor {
            name: ckpt.meta.labels[i].canonical_name.clone(),
            probability: pred.probabilities[i],
        })
        .collect();
    Ok(Prediction {
        ranked,
        estimated_authors: evaluate::estimate_author_count(&pred, opts.ratio),
    })
}

/// Calibration sets pooled by [`cmd_tune_disambig`], seeded consecutively.
pub const TUNE_ROUNDS: u64 = 4;

/// Grid-searches the clustering parameters on synthetic calibration sets of
/// twenty single-person and twenty shared names each.
pub fn cmd_tune_disambig(cfg: &SmokeConfig, encoder: &EncoderSpec) -> Result<TuneResult> {
    let encoder = encoder.open()?;
    let mut authors = Vec::new();
    for round in 0..TUNE_ROUNDS {
        let cfg = SmokeConfig {
            seed: cfg.seed + round,
            ..cfg.clone()
        };
        authors.extend(synth::calibration_set(&cfg, 20, 20, encoder.as_ref())?);
    }
    disambig::tune(&authors, &disambig::eps_grid(), &disambig::min_pts_grid(), disambig::Metric::Euclidean)
}

/// Writes a synthetic corpus and returns the path of its corpus file.
pub fn cmd_synth(out: &Path, cfg: &SmokeConfig) -> Result<PathBuf> {
    store::write_corpus(out, &synth::smoke_corpus(cfg))
}
