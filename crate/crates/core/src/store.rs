//! On-disk formats: the input corpus, parsed-paper artifacts and dataset
//! bundle directories.
//!
//! A bundle directory holds `manifest.json`, `train.jsonl`
//! (`{"id", "label", "gold"}` per line), `test.jsonl` (`{"id", "gold"}`)
//! and one artifact per paper under `papers/`.
//!
//! Paper artifact layout, one record per line, fields separated by tabs,
//! with `\\`, `\t`, `\n` and `\r` escaped in free text:
//!
//! ```text
//! id<TAB><id>
//! title<TAB><title>
//! authors<TAB><name><TAB><name>...
//! abstract<TAB><abstract>
//! chunks<TAB><n>
//! <index><TAB><space-joined tokens>        (n lines)
//! references<TAB><m>
//! <space-joined surnames><TAB><raw entry>  (m lines)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::ingest::{AuthorLabel, DatasetBundle, DatasetName, Manuscript, TestSample, TrainSample};
use crate::paper::ParsedPaper;
use crate::preprocess::ContentChunk;
use crate::refparse::CitedReference;

pub const BUNDLE_FORMAT: u32 = 1;

/// One line of the corpus file. `text_path` is resolved against the
/// directory holding the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    pub authors: Vec<String>,
    pub text_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct Corpus {
    pub manuscripts: Vec<Manuscript>,
    /// Records whose text could not be loaded, by id.
    pub drops: BTreeMap<String, DropRecord>,
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut corpus = Corpus::default();
    let mut seen = BTreeSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format("corpus", format!("line {}: {e}", n + 1)))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::format("corpus", format!("line {}: duplicate id {}", n + 1, rec.id)));
        }
        if rec.authors.is_empty() {
            corpus.drops.insert(
                rec.id,
                DropRecord {
                    stage: Stage::Names,
                    reason: "no authors listed".into(),
                },
            );
            continue;
        }
        let text_path = base.join(&rec.text_path);
        match fs::read(&text_path) {
            Ok(bytes) => corpus.manuscripts.push(Manuscript {
                id: rec.id,
                title: rec.title,
                abstract_text: rec.abstract_text,
                authors: rec.authors,
                raw_text: String::from_utf8_lossy(&bytes).into_owned(),
            }),
            Err(e) => {
                corpus.drops.insert(
                    rec.id,
                    DropRecord {
                        stage: Stage::Text,
                        reason: format!("cannot read {}: {e}", rec.text_path),
                    },
                );
            }
        }
    }
    Ok(corpus)
}

/// Writes `corpus.jsonl` plus one text file per manuscript under `texts/`.
pub fn write_corpus(dir: &Path, manuscripts: &[Manuscript]) -> Result<PathBuf> {
    let texts = dir.join("texts");
    fs::create_dir_all(&texts).map_err(|e| Error::io(&texts, e))?;
    let path = dir.join("corpus.jsonl");
    let mut out = String::new();
    for m in manuscripts {
        let rel = format!("texts/{}.txt", sanitize_id(&m.id));
        let p = dir.join(&rel);
        fs::write(&p, &m.raw_text).map_err(|e| Error::io(&p, e))?;
        let rec = CorpusRecord {
            id: m.id.clone(),
            title: m.title.clone(),
            abstract_text: m.abstract_text.clone(),
            authors: m.authors.clone(),
            text_path: rel,
        };
        out.push_str(&serde_json::to_string(&rec).expect("serializable"));
        out.push('\n');
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// File-name-safe form of a paper id; distinct ids map to distinct names.
pub fn sanitize_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        match b {
            b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'.' | b'-' => out.push(b as char),
            _ => out.push_str(&format!("_{b:02x}")),
        }
    }
    if out.starts_with('.') {
        out.insert(0, '_');
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            _ => return Err(Error::format("paper artifact", "bad escape sequence")),
        }
    }
    Ok(out)
}

pub fn paper_to_text(p: &ParsedPaper) -> String {
    let mut out = String::new();
    out.push_str(&format!("id\t{}\n", escape(&p.id)));
    out.push_str(&format!("title\t{}\n", escape(&p.title)));
    out.push_str("authors");
    for a in &p.authors {
        out.push('\t');
        out.push_str(&escape(a));
    }
    out.push('\n');
    out.push_str(&format!("abstract\t{}\n", escape(&p.abstract_text)));
    out.push_str(&format!("chunks\t{}\n", p.chunks.len()));
    for c in &p.chunks {
        out.push_str(&format!("{}\t{}\n", c.index, c.words.join(" ")));
    }
    out.push_str(&format!("references\t{}\n", p.references.len()));
    for r in &p.references {
        out.push_str(&format!("{}\t{}\n", r.surnames.join(" "), escape(&r.raw)));
    }
    out
}

pub fn paper_from_text(text: &str) -> Result<ParsedPaper> {
    let bad = |m: String| Error::format("paper artifact", m);
    let mut lines = text.split('\n');
    let field = |lines: &mut std::str::Split<'_, char>, name: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{name}` line")))?;
        line.strip_prefix(name)
            .and_then(|r| if r.is_empty() { Some("") } else { r.strip_prefix('\t') })
            .map(str::to_string)
            .ok_or_else(|| bad(format!("expected `{name}`, found `{line}`")))
    };
    let id = unescape(&field(&mut lines, "id")?)?;
    let title = unescape(&field(&mut lines, "title")?)?;
    let authors_line = field(&mut lines, "authors")?;
    let authors = if authors_line.is_empty() {
        Vec::new()
    } else {
        authors_line.split('\t').map(unescape).collect::<Result<_>>()?
    };
    let abstract_text = unescape(&field(&mut lines, "abstract")?)?;
    let n: usize = field(&mut lines, "chunks")?.parse().map_err(|_| bad("bad chunk count".into()))?;
    let mut chunks = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| bad("missing chunk line".into()))?;
        let (idx, words) = line.split_once('\t').ok_or_else(|| bad("bad chunk line".into()))?;
        let index = idx.parse().map_err(|_| bad(format!("bad chunk index `{idx}`")))?;
        chunks.push(ContentChunk::new(words.split(' ').filter(|w| !w.is_empty()).map(str::to_string).collect(), index));
    }
    let m: usize = field(&mut lines, "references")?.parse().map_err(|_| bad("bad reference count".into()))?;
    let mut references = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines.next().ok_or_else(|| bad("missing reference line".into()))?;
        let (names, raw) = line.split_once('\t').ok_or_else(|| bad("bad reference line".into()))?;
        references.push(CitedReference {
            raw: unescape(raw)?,
            surnames: names.split(' ').filter(|s| !s.is_empty()).map(str::to_string).collect(),
        });
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(bad("trailing content".into()));
    }
    Ok(ParsedPaper {
        id,
        title,
        authors,
        abstract_text,
        chunks,
        references,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorVerdict {
    pub kept: bool,
    pub papers: usize,
    pub n_clusters: usize,
    pub n_noise: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub label: AuthorLabel,
    pub train: usize,
    pub test: usize,
}

/// Bundle metadata plus what happened to every input record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub name: DatasetName,
    pub seed: u64,
    pub chunked: bool,
    pub test_ratio: f64,
    pub labels: Vec<LabelCounts>,
    pub n_train: usize,
    pub n_test: usize,
    pub ratio_drift: Vec<String>,
    pub manuscripts: usize,
    pub drop_counts: BTreeMap<String, usize>,
    pub drops: BTreeMap<String, DropRecord>,
    /// Parsed papers that carry no selected author.
    pub unlabeled_papers: usize,
    pub disambiguation: BTreeMap<String, AuthorVerdict>,
    /// Free-form notes on how the bundle was built.
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn for_bundle(bundle: &DatasetBundle, test_ratio: f64) -> Self {
        let mut counts: Vec<(usize, usize)> = vec![(0, 0); bundle.labels.len()];
        for s in &bundle.train {
            for &g in &s.gold {
                counts[g].0 += 1;
            }
        }
        for s in &bundle.test {
            for &g in &s.gold {
                counts[g].1 += 1;
            }
        }
        Self {
            format: BUNDLE_FORMAT,
            name: bundle.name,
            seed: bundle.seed,
            chunked: bundle.chunked,
            test_ratio,
            labels: bundle
                .labels
                .iter()
                .zip(counts)
                .map(|(l, (train, test))| LabelCounts {
                    label: l.clone(),
                    train,
                    test,
                })
                .collect(),
            n_train: bundle.train.len(),
            n_test: bundle.test.len(),
            ratio_drift: bundle.ratio_drift.clone(),
            manuscripts: 0,
            drop_counts: BTreeMap::new(),
            drops: BTreeMap::new(),
            unlabeled_papers: 0,
            disambiguation: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn set_drops(&mut self, drops: BTreeMap<String, DropRecord>) {
        self.drop_counts.clear();
        for d in drops.values() {
            *self.drop_counts.entry(d.stage.as_str().to_string()).or_default() += 1;
        }
        self.drops = drops;
    }
}

#[derive(Serialize, Deserialize)]
struct TrainLine {
    id: String,
    label: usize,
    gold: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TestLine {
    id: String,
    gold: Vec<usize>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(contents)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn jsonl<T: Serialize>(items: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(&it).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn write_bundle(dir: &Path, bundle: &DatasetBundle, manifest: &Manifest) -> Result<()> {
    let papers_dir = dir.join("papers");
    fs::create_dir_all(&papers_dir).map_err(|e| Error::io(&papers_dir, e))?;
    let mut train: Vec<&TrainSample> = bundle.train.iter().collect();
    train.sort_by(|a, b| a.paper.id.cmp(&b.paper.id));
    let mut test: Vec<&TestSample> = bundle.test.iter().collect();
    test.sort_by(|a, b| a.paper.id.cmp(&b.paper.id));

    let manifest_json = serde_json::to_string_pretty(manifest).expect("serializable") + "\n";
    write_file(&dir.join("manifest.json"), manifest_json.as_bytes())?;
    let train_lines = jsonl(train.iter().map(|s| TrainLine {
        id: s.paper.id.clone(),
        label: s.label,
        gold: s.gold.clone(),
    }));
    write_file(&dir.join("train.jsonl"), train_lines.as_bytes())?;
    let test_lines = jsonl(test.iter().map(|s| TestLine {
        id: s.paper.id.clone(),
        gold: s.gold.clone(),
    }));
    write_file(&dir.join("test.jsonl"), test_lines.as_bytes())?;
    for p in train.iter().map(|s| &s.paper).chain(test.iter().map(|s| &s.paper)) {
        let path = papers_dir.join(format!("{}.txt", sanitize_id(&p.id)));
        write_file(&path, paper_to_text(p).as_bytes())?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_paper(dir: &Path, id: &str) -> Result<ParsedPaper> {
    let path = dir.join("papers").join(format!("{}.txt", sanitize_id(id)));
    let paper = paper_from_text(&read_text(&path)?)?;
    if paper.id != id {
        return Err(Error::format("paper artifact", format!("{} holds paper {}", path.display(), paper.id)));
    }
    Ok(paper)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let m: Manifest = serde_json::from_str(&read_text(&path)?).map_err(|e| Error::format("manifest", e.to_string()))?;
    if m.format != BUNDLE_FORMAT {
        return Err(Error::format("manifest", format!("unsupported bundle format {}", m.format)));
    }
    Ok(m)
}

pub fn read_bundle(dir: &Path) -> Result<(DatasetBundle, Manifest)> {
    let manifest = read_manifest(dir)?;
    let n_labels = manifest.labels.len();
    let check = |gold: &[usize], id: &str| -> Result<()> {
        if gold.is_empty() || gold.iter().any(|&g| g >= n_labels) {
            return Err(Error::format("bundle", format!("invalid labels for paper {id}")));
        }
        Ok(())
    };
    let mut train = Vec::new();
    for (n, line) in read_text(&dir.join("train.jsonl"))?.lines().enumerate() {
        let t: TrainLine = serde_json::from_str(line).map_err(|e| Error::format("train.jsonl", format!("line {}: {e}", n + 1)))?;
        check(&t.gold, &t.id)?;
        if !t.gold.contains(&t.label) {
            return Err(Error::format("train.jsonl", format!("label of {} is not among its authors", t.id)));
        }
        train.push(TrainSample {
            paper: read_paper(dir, &t.id)?,
            label: t.label,
            gold: t.gold,
        });
    }
    let mut test = Vec::new();
    for (n, line) in read_text(&dir.join("test.jsonl"))?.lines().enumerate() {
        let t: TestLine = serde_json::from_str(line).map_err(|e| Error::format("test.jsonl", format!("line {}: {e}", n + 1)))?;
        check(&t.gold, &t.id)?;
        test.push(TestSample {
            paper: read_paper(dir, &t.id)?,
            gold: t.gold,
        });
    }
    let bundle = DatasetBundle {
        name: manifest.name,
        labels: manifest.labels.iter().map(|l| l.label.clone()).collect(),
        train,
        test,
        chunked: manifest.chunked,
        seed: manifest.seed,
        ratio_drift: manifest.ratio_drift.clone(),
    };
    Ok((bundle, manifest))
}
