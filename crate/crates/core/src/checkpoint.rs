//! Versioned binary checkpoints: a JSON header followed by raw tensors.
//!
//! Layout: 8-byte magic `AACKPT\0\0`, u32 LE format version, u64 LE header
//! length, the UTF-8 JSON header, then every parameter tensor as f64 LE in
//! the order given by `FusionModel::tensors`, with lengths listed in the
//! header's `tensor_lengths`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CitationVocab;
use crate::ingest::AuthorLabel;
use crate::model::{FusionModel, ModelConfig, TrainConfig, TrainReport};

const MAGIC: &[u8; 8] = b"AACKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

/// Everything besides the parameters needed to reuse a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dataset: String,
    pub chunked: bool,
    pub train: TrainConfig,
    pub report: TrainReport,
    pub labels: Vec<AuthorLabel>,
    pub vocab: CitationVocab,
    pub encoder_id: String,
    pub normalize_hist: bool,
    /// Optimizer settings, recorded because they are not configurable.
    pub optimizer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: FusionModel,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    meta: CheckpointMeta,
    model: ModelConfig,
    tensor_lengths: Vec<usize>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: FORMAT_VERSION,
            meta: self.meta.clone(),
            model: self.model.config.clone(),
            tensor_lengths: self.model.tensors().iter().map(|t| t.len()).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + self.model.n_params() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.model.tensors() {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("checkpoint", m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version} (expected {FORMAT_VERSION})"),
            ));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..len]).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut model = FusionModel::zeros(header.model)?;
        let expected: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        if expected != header.tensor_lengths {
            return Err(bad("tensor shapes do not match the model configuration"));
        }
        let mut data = body[len..].chunks_exact(8);
        if data.len() != expected.iter().sum::<usize>() || !data.remainder().is_empty() {
            return Err(bad("parameter data has the wrong length"));
        }
        for t in model.tensors_mut() {
            for x in t.iter_mut() {
                *x = f64::from_le_bytes(data.next().unwrap().try_into().unwrap());
            }
        }
        Ok(Self {
            meta: header.meta,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;

    fn sample() -> Checkpoint {
        let mut cfg = ModelConfig::new(Mode::RefCont, 3, 2, 2);
        cfg.hidden = 4;
        cfg.rhe_out = 2;
        cfg.text_projection = true;
        Checkpoint {
            meta: CheckpointMeta {
                dataset: "D5".into(),
                chunked: false,
                train: TrainConfig::for_mode(Mode::RefCont, false, 7),
                report: TrainReport { epoch_losses: vec![0.5] },
                labels: vec![AuthorLabel::new("Ada Lovelace", 5), AuthorLabel::new("Alan Turing", 6)],
                vocab: CitationVocab::from_text("# min_count 1\nlee\t3\nkim\t2\n").unwrap(),
                encoder_id: "native-d3-s0-wc".into(),
                normalize_hist: false,
                optimizer: "adam".into(),
            },
            model: FusionModel::init(cfg, 11).unwrap(),
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(Checkpoint::from_bytes(b"not a checkpoint at all").is_err());
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(Checkpoint::from_bytes(&v).is_err());
    }
}
