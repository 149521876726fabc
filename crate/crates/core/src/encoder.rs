//! Fixed-size text encoders and the on-disk embedding cache.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hashing::seeded_hash;

/// Maps a piece of text to a fixed-length vector.
pub trait TextEncoder: Send + Sync {
    /// Identifies the encoder and its settings; embeddings from different ids
    /// are never mixed.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
}

/// Self-contained hashed bag-of-n-grams encoder.
///
/// Word unigrams (`w:<word>`) and character trigrams of each `<word>` are
/// counted on the lower-cased text, weighted by `1 + ln(tf)`, and added with a
/// hash-derived sign into `dim` buckets. The result is L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NativeEncoder {
    pub dim: usize,
    pub seed: u64,
    pub unigrams: bool,
    pub trigrams: bool,
}

pub const NATIVE_DIM: usize = 256;

impl Default for NativeEncoder {
    fn default() -> Self {
        Self {
            dim: NATIVE_DIM,
            seed: 0,
            unigrams: true,
            trigrams: true,
        }
    }
}

impl NativeEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("encoder.dim", "must be at least 1"));
        }
        Ok(Self {
            dim,
            seed,
            ..Self::default()
        })
    }

    fn features(&self, text: &str) -> BTreeMap<String, u32> {
        let mut tf = BTreeMap::new();
        for word in text.split_whitespace() {
            let word = word.to_lowercase();
            if self.unigrams {
                *tf.entry(format!("w:{word}")).or_default() += 1;
            }
            if self.trigrams {
                let padded: Vec<char> = std::iter::once('<')
                    .chain(word.chars())
                    .chain(std::iter::once('>'))
                    .collect();
                for tri in padded.windows(3) {
                    let mut f = String::from("c:");
                    f.extend(tri);
                    *tf.entry(f).or_default() += 1;
                }
            }
        }
        tf
    }
}

impl TextEncoder for NativeEncoder {
    fn id(&self) -> String {
        let mut grams = String::new();
        if self.unigrams {
            grams.push('w');
        }
        if self.trigrams {
            grams.push('c');
        }
        format!("native-d{}-s{}-{grams}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for (feature, tf) in self.features(text) {
            let h = seeded_hash(self.seed, feature.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign * (1.0 + (tf as f64).ln());
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(v)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"AAEMB\0\0\x01";

/// Embeddings keyed by `(paper_id, chunk_index)` for a single encoder.
///
/// File layout (little endian): magic, encoder id (u32 length + UTF-8),
/// dimension (u32), row count (u64), then the key column (per row: u32 id
/// length, id bytes, u32 chunk index) followed by the value column (rows x dim
/// f64).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingCache {
    pub encoder_id: String,
    pub dim: usize,
    rows: BTreeMap<(String, u32), Vec<f64>>,
}

impl EmbeddingCache {
    pub fn new(encoder_id: impl Into<String>, dim: usize) -> Self {
        Self {
            encoder_id: encoder_id.into(),
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn get(&self, paper_id: &str, chunk: u32) -> Option<&[f64]> {
        self.rows
            .get(&(paper_id.to_string(), chunk))
            .map(Vec::as_slice)
    }

    pub fn insert(&mut self, paper_id: &str, chunk: u32, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::config(
                "embedding",
                format!("dimension {} differs from cache dimension {}", vector.len(), self.dim),
            ));
        }
        self.rows.insert((paper_id.to_string(), chunk), vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.rows.len() * (self.dim * 8 + 24));
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.encoder_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.encoder_id.as_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        for (id, chunk) in self.rows.keys() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&chunk.to_le_bytes());
        }
        for v in self.rows.values() {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::format("embedding cache", "bad magic"));
        }
        let id_len = read_u32(&mut r)? as usize;
        let encoder_id = read_string(&mut r, id_len)?;
        let dim = read_u32(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let mut keys = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = read_u32(&mut r)? as usize;
            let id = read_string(&mut r, len)?;
            keys.push((id, read_u32(&mut r)?));
        }
        let mut rows = BTreeMap::new();
        for key in keys {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b)?;
                v.push(f64::from_le_bytes(b));
            }
            rows.insert(key, v);
        }
        if !r.is_empty() {
            return Err(Error::format("embedding cache", "trailing bytes"));
        }
        Ok(Self {
            encoder_id,
            dim,
            rows,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format("embedding cache", "truncated file"))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut &[u8], len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::format("embedding cache", "non UTF-8 key"))
}
