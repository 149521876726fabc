//! Fixture loaders shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod e2e;
pub mod oracle;

use std::fs;
use std::path::{Path, PathBuf};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Clone)]
pub struct RefBlock {
    pub file: String,
    pub id: String,
    pub raw: String,
    pub gold: Option<Vec<Vec<String>>>,
}

/// Block id, raw lines and gold lists while a block is being read.
type OpenBlock<'a> = Option<(String, Vec<&'a str>, Option<Vec<Vec<String>>>)>;

fn parse_ref_file(file: &str, text: &str) -> Vec<RefBlock> {
    let mut blocks = Vec::new();
    let mut current: OpenBlock = None;
    let flush = |c: OpenBlock, blocks: &mut Vec<RefBlock>| {
        if let Some((id, mut raw, gold)) = c {
            while raw.last().is_some_and(|l| l.trim().is_empty()) {
                raw.pop();
            }
            blocks.push(RefBlock {
                file: file.to_string(),
                id,
                raw: raw.join("\n"),
                gold,
            });
        }
    };
    for line in text.lines() {
        if let Some(id) = line.strip_prefix("=== ") {
            flush(current.take(), &mut blocks);
            current = Some((id.trim().to_string(), Vec::new(), None));
            continue;
        }
        let Some((_, raw, gold)) = current.as_mut() else {
            continue;
        };
        if line == "--- gold" {
            *gold = Some(Vec::new());
        } else if let Some(g) = gold.as_mut() {
            if line.trim().is_empty() {
                continue;
            }
            if line.trim() == "-" {
                g.push(Vec::new());
            } else {
                g.push(line.split(", ").map(|s| s.trim().to_string()).collect());
            }
        } else {
            raw.push(line);
        }
    }
    flush(current, &mut blocks);
    blocks
}

/// Every labelled block of `fixtures/references`, malformed ones excluded.
pub fn reference_blocks() -> Vec<RefBlock> {
    load_refs(|name| name != "malformed.txt")
}

pub fn malformed_blocks() -> Vec<RefBlock> {
    load_refs(|name| name == "malformed.txt")
}

fn load_refs(keep: impl Fn(&str) -> bool) -> Vec<RefBlock> {
    let dir = fixture_dir().join("references");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .expect("reference fixtures")
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".txt") && keep(n))
        .collect();
    names.sort();
    names
        .iter()
        .flat_map(|n| parse_ref_file(n, &fs::read_to_string(dir.join(n)).unwrap()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SegFixture {
    pub name: String,
    pub raw: String,
    /// `None` when the manuscript must be rejected.
    pub labels: Option<[String; 4]>,
}

pub fn segmentation_fixtures() -> Vec<SegFixture> {
    let dir = fixture_dir().join("segmentation");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .expect("segmentation fixtures")
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".txt"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let text = fs::read_to_string(dir.join(&name)).unwrap();
            let mut labels = std::collections::BTreeMap::new();
            let mut body = Vec::new();
            for line in text.lines() {
                match line.strip_prefix("%% ") {
                    Some(l) if body.is_empty() => {
                        let (k, v) = l.split_once(':').expect("label line");
                        labels.insert(k.trim().to_string(), v.trim().to_string());
                    }
                    _ => body.push(line),
                }
            }
            let labels = if labels.get("expect").map(String::as_str) == Some("reject") {
                None
            } else {
                let get = |k: &str| labels.get(k).unwrap_or_else(|| panic!("{name}: missing {k}")).clone();
                Some([
                    get("content-first"),
                    get("content-last"),
                    get("references-first"),
                    get("references-last"),
                ])
            };
            SegFixture {
                name,
                raw: body.join("\n"),
                labels,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ChunkCase {
    pub expected_avg: f64,
    pub keep: bool,
    pub words: Vec<String>,
}

pub fn chunk_cases() -> Vec<ChunkCase> {
    let text = fs::read_to_string(fixture_dir().join("chunks.txt")).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace();
            let expected_avg = it.next().unwrap().parse().unwrap();
            let keep = match it.next().unwrap() {
                "keep" => true,
                "drop" => false,
                other => panic!("bad verdict {other}"),
            };
            ChunkCase {
                expected_avg,
                keep,
                words: it.map(str::to_string).collect(),
            }
        })
        .collect()
}

/// Per-entry exact-match tally of the parser against the gold lists. Blocks
/// that fail to parse count every entry as a miss.
pub struct RefScore {
    pub entries: usize,
    pub exact: usize,
    pub misses: Vec<String>,
}

pub fn score_reference_fixtures() -> RefScore {
    let mut score = RefScore {
        entries: 0,
        exact: 0,
        misses: Vec::new(),
    };
    for b in reference_blocks() {
        let gold = b.gold.as_ref().expect("labelled block");
        score.entries += gold.len();
        match authattr::refparse::parse_block(&b.raw) {
            Ok(refs) if refs.len() == gold.len() => {
                for (i, (r, g)) in refs.iter().zip(gold).enumerate() {
                    if &r.surnames == g {
                        score.exact += 1;
                    } else {
                        score.misses.push(format!("{} #{}: got {:?}, want {:?}", b.id, i + 1, r.surnames, g));
                    }
                }
            }
            Ok(refs) => score.misses.push(format!("{}: {} entries, want {}", b.id, refs.len(), gold.len())),
            Err(e) => score.misses.push(format!("{}: {e}", b.id)),
        }
    }
    score
}

/// Blocks rejected with a fail-fast at the reference stage, out of all
/// malformed blocks.
pub fn score_malformed() -> (usize, usize) {
    let blocks = malformed_blocks();
    let rejected = blocks
        .iter()
        .filter(|b| {
            matches!(
                authattr::refparse::parse_block(&b.raw),
                Err(authattr::Error::FailFast { stage: authattr::Stage::References, .. })
            )
        })
        .count();
    (rejected, blocks.len())
}

pub struct SegScore {
    pub labelled: usize,
    pub agree: usize,
    pub anchor_free: usize,
    pub rejected: usize,
    pub misses: Vec<String>,
}

fn first_last(text: &str) -> Option<[String; 2]> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    Some([lines.first()?.to_string(), lines.last()?.to_string()])
}

pub fn score_segmentation() -> SegScore {
    use authattr::preprocess::{clean_lines, segment, SegmentConfig};
    let mut s = SegScore {
        labelled: 0,
        agree: 0,
        anchor_free: 0,
        rejected: 0,
        misses: Vec::new(),
    };
    for f in segmentation_fixtures() {
        let result = segment(&clean_lines(&f.raw), &SegmentConfig::default());
        match &f.labels {
            Some([cf, cl, rf, rl]) => {
                s.labelled += 1;
                let ok = result.as_ref().is_ok_and(|seg| {
                    first_last(&seg.content) == Some([cf.clone(), cl.clone()])
                        && first_last(&seg.references_block) == Some([rf.clone(), rl.clone()])
                });
                if ok {
                    s.agree += 1;
                } else {
                    s.misses.push(f.name.clone());
                }
            }
            None => {
                s.anchor_free += 1;
                if matches!(result, Err(authattr::Error::FailFast { stage: authattr::Stage::Segment, .. })) {
                    s.rejected += 1;
                } else {
                    s.misses.push(f.name.clone());
                }
            }
        }
    }
    s
}

/// Chunk cases whose computed average and keep/drop verdict both match.
pub fn score_chunks() -> (usize, usize) {
    use authattr::preprocess::{filter_chunks, ContentChunk, MIN_AVG_WORD_LEN};
    let cases = chunk_cases();
    let correct = cases
        .iter()
        .filter(|c| {
            let chunk = ContentChunk::new(c.words.clone(), 0);
            (chunk.avg_word_len - c.expected_avg).abs() < 1e-9
                && (filter_chunks(vec![chunk], MIN_AVG_WORD_LEN).len() == 1) == c.keep
        })
        .count();
    (correct, cases.len())
}
