//! The fusion classifier: text embedding and compressed reference histogram,
//! concatenated and fed to a two-layer head.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{RheParams, RHE_OUT};
use crate::nn::{cross_entropy, relu, softmax, Adam, AdamConfig, Dense};

pub const HEAD_HIDDEN: usize = 512;
pub const BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Content,
    References,
    RefNoSelf,
    RefCont,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Content, Mode::References, Mode::RefNoSelf, Mode::RefCont];

    pub fn uses_content(self) -> bool {
        matches!(self, Mode::Content | Mode::RefCont)
    }

    pub fn uses_references(self) -> bool {
        !matches!(self, Mode::Content)
    }

    pub fn strips_self_citations(self) -> bool {
        self == Mode::RefNoSelf
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Content => "content",
            Mode::References => "references",
            Mode::RefNoSelf => "ref-no-self",
            Mode::RefCont => "ref-cont",
        }
    }

    /// Learning rate used when none is given.
    pub fn default_learning_rate(self, chunked: bool) -> f64 {
        match (self, chunked) {
            (Mode::Content, _) => 1e-4,
            (Mode::References | Mode::RefNoSelf, _) => 8e-4,
            (Mode::RefCont, false) => 3e-4,
            (Mode::RefCont, true) => 5e-5,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "content" => Ok(Mode::Content),
            "references" => Ok(Mode::References),
            "ref-no-self" => Ok(Mode::RefNoSelf),
            "ref-cont" => Ok(Mode::RefCont),
            _ => Err(Error::config(
                "mode",
                format!("unknown mode `{s}` (expected content, references, ref-no-self or ref-cont)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_text: usize,
    pub n_hist: usize,
    pub rhe_out: usize,
    pub hidden: usize,
    pub n_labels: usize,
    pub use_content: bool,
    pub use_references: bool,
    pub text_projection: bool,
}

impl ModelConfig {
    pub fn new(mode: Mode, d_text: usize, n_hist: usize, n_labels: usize) -> Self {
        Self {
            d_text,
            n_hist,
            rhe_out: RHE_OUT,
            hidden: HEAD_HIDDEN,
            n_labels,
            use_content: mode.uses_content(),
            use_references: mode.uses_references(),
            text_projection: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_content && !self.use_references {
            return Err(Error::config("mode", "at least one of content and references must be used"));
        }
        if self.n_labels == 0 {
            return Err(Error::config("labels", "label space is empty"));
        }
        if self.hidden == 0 || self.rhe_out == 0 {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub config: ModelConfig,
    pub rhe: RheParams,
    pub projection: Option<Dense>,
    pub head_hidden: Dense,
    pub head_output: Dense,
}

/// Features of one training or evaluation unit; absent modalities may be
/// empty and are replaced by zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Input {
    pub text: Vec<f64>,
    pub hist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Input,
    pub label: usize,
}

/// Intermediate activations kept for backpropagation.
struct Trace {
    rhe_mid: Vec<f64>,
    joint: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl FusionModel {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rhe: RheParams::zeros(config.n_hist, config.rhe_out),
            projection: config.text_projection.then(|| Dense::zeros(config.d_text, config.d_text)),
            head_hidden: Dense::zeros(config.d_text + config.rhe_out, config.hidden),
            head_output: Dense::zeros(config.hidden, config.n_labels),
            config,
        })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::init_with(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn init_with<R: rand::Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rhe: RheParams::init(config.n_hist, config.rhe_out, rng),
            projection: config
                .text_projection
                .then(|| Dense::init(config.d_text, config.d_text, rng)),
            head_hidden: Dense::init(config.d_text + config.rhe_out, config.hidden, rng),
            head_output: Dense::init(config.hidden, config.n_labels, rng),
            config,
        })
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![
            &self.rhe.hidden.weight,
            &self.rhe.hidden.bias,
            &self.rhe.output.weight,
            &self.rhe.output.bias,
        ];
        if let Some(p) = &self.projection {
            out.extend([&p.weight, &p.bias]);
        }
        out.extend([
            &self.head_hidden.weight,
            &self.head_hidden.bias,
            &self.head_output.weight,
            &self.head_output.bias,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![
            &mut self.rhe.hidden.weight,
            &mut self.rhe.hidden.bias,
            &mut self.rhe.output.weight,
            &mut self.rhe.output.bias,
        ];
        if let Some(p) = &mut self.projection {
            out.extend([&mut p.weight, &mut p.bias]);
        }
        out.extend([
            &mut self.head_hidden.weight,
            &mut self.head_hidden.bias,
            &mut self.head_output.weight,
            &mut self.head_output.bias,
        ]);
        out
    }

    fn check_input(&self, input: &Input) -> Result<()> {
        let c = &self.config;
        if c.use_content && input.text.len() != c.d_text {
            return Err(Error::config(
                "text embedding",
                format!("length {} does not match model dimension {}", input.text.len(), c.d_text),
            ));
        }
        if c.use_references && input.hist.len() != c.n_hist {
            return Err(Error::config(
                "histogram",
                format!("length {} does not match vocabulary size {}", input.hist.len(), c.n_hist),
            ));
        }
        Ok(())
    }

    fn trace(&self, input: &Input) -> Result<Trace> {
        self.check_input(input)?;
        let c = &self.config;
        let mut joint = Vec::with_capacity(c.d_text + c.rhe_out);
        if c.use_content {
            match &self.projection {
                Some(p) => joint.extend(p.forward(&input.text)),
                None => joint.extend_from_slice(&input.text),
            }
        } else {
            joint.resize(c.d_text, 0.0);
        }
        let mut rhe_mid = Vec::new();
        if c.use_references {
            rhe_mid = self.rhe.hidden.forward(&input.hist);
            relu(&mut rhe_mid);
            joint.extend(self.rhe.output.forward(&rhe_mid));
        } else {
            joint.resize(c.d_text + c.rhe_out, 0.0);
        }
        let mut hidden = self.head_hidden.forward(&joint);
        relu(&mut hidden);
        let logits = self.head_output.forward(&hidden);
        Ok(Trace {
            rhe_mid,
            joint,
            hidden,
            logits,
        })
    }

    pub fn forward(&self, input: &Input) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.logits)
    }

    /// Which ReLU units are active for each example, in a fixed order.
    pub fn activation_pattern(&self, batch: &[Example]) -> Result<Vec<bool>> {
        let mut out = Vec::new();
        for ex in batch {
            let t = self.trace(&ex.input)?;
            out.extend(t.rhe_mid.iter().map(|&v| v > 0.0));
            out.extend(t.hidden.iter().map(|&v| v > 0.0));
        }
        Ok(out)
    }

    pub fn loss(&self, batch: &[Example]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::config("batch", "empty batch"));
        }
        let mut total = 0.0;
        for ex in batch {
            self.check_label(ex.label)?;
            total += cross_entropy(&self.forward(&ex.input)?, ex.label);
        }
        Ok(total / batch.len() as f64)
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.config.n_labels {
            return Err(Error::config(
                "label",
                format!("index {label} outside label space of {}", self.config.n_labels),
            ));
        }
        Ok(())
    }

    /// Mean loss over the batch and its gradient, shaped like the model.
    pub fn gradients(&self, batch: &[Example]) -> Result<(f64, FusionModel)> {
        if batch.is_empty() {
            return Err(Error::config("batch", "empty batch"));
        }
        let mut grad = FusionModel::zeros(self.config.clone())?;
        let scale = 1.0 / batch.len() as f64;
        let c = &self.config;
        let mut total = 0.0;
        for ex in batch {
            self.check_label(ex.label)?;
            let t = self.trace(&ex.input)?;
            total += cross_entropy(&t.logits, ex.label);

            let mut d_logits = softmax(&t.logits);
            d_logits[ex.label] -= 1.0;
            for d in &mut d_logits {
                *d *= scale;
            }
            let mut d_hidden = self.head_output.backward(&t.hidden, &d_logits, &mut grad.head_output);
            mask(&mut d_hidden, &t.hidden);
            let d_joint = self.head_hidden.backward(&t.joint, &d_hidden, &mut grad.head_hidden);

            if c.use_content {
                if let (Some(p), Some(g)) = (&self.projection, &mut grad.projection) {
                    p.accumulate(&ex.input.text, &d_joint[..c.d_text], g);
                }
            }
            if c.use_references {
                let mut d_mid = self.rhe.output.backward(&t.rhe_mid, &d_joint[c.d_text..], &mut grad.rhe.output);
                mask(&mut d_mid, &t.rhe_mid);
                self.rhe.hidden.accumulate(&ex.input.hist, &d_mid, &mut grad.rhe.hidden);
            }
        }
        Ok((total * scale, grad))
    }
}

fn mask(d: &mut [f64], activated: &[f64]) {
    for (g, &a) in d.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_mode(mode: Mode, chunked: bool, seed: u64) -> Self {
        Self {
            mode,
            learning_rate: mode.default_learning_rate(chunked),
            epochs: 10,
            batch_size: BATCH_SIZE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("lr", "learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Minibatch Adam from a fresh initialization drawn from `cfg.seed`.
pub fn train(config: ModelConfig, examples: &[Example], cfg: &TrainConfig) -> Result<(FusionModel, TrainReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = FusionModel::init_with(config, &mut rng)?;
    train_from(model, examples, cfg, &mut rng)
}

/// Continues training an existing model.
pub fn resume(model: FusionModel, examples: &[Example], cfg: &TrainConfig) -> Result<(FusionModel, TrainReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    train_from(model, examples, cfg, &mut rng)
}

fn train_from(
    mut model: FusionModel,
    examples: &[Example],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(FusionModel, TrainReport)> {
    if examples.is_empty() {
        return Err(Error::config("train", "no training examples"));
    }
    let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), &shapes);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = idx.iter().map(|&i| examples[i].clone()).collect();
            let (loss, grad) = model.gradients(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss in epoch {} (learning rate {} may be too high)",
                    epoch + 1,
                    cfg.learning_rate
                )));
            }
            sum += loss * batch.len() as f64;
            adam.update(model.tensors_mut(), grad.tensors());
        }
        let mean = sum / examples.len() as f64;
        log::info!("epoch {}: loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    if model.tensors().iter().any(|t| t.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numeric("non-finite parameters after training".into()));
    }
    Ok((model, TrainReport { epoch_losses }))
}
