//! Decoder-only causal transformer with an LM head and a regression head.
//!
//! Forward and backward passes are written out by hand in f64; gradients are
//! exact and are checked against central finite differences in the tests.

mod backward;
pub mod checkpoint;
mod forward;
mod linalg;
mod loss;

pub use forward::{attention, probs_from_logits, Cache, IncrementalState};
pub use linalg::{log_softmax, softmax_inplace, Mat};
pub use loss::{loss_finetune, loss_pretrain, regression_outputs};
pub(crate) use loss::next_token_nll;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("batch and target lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Architecture hyperparameters.
///
/// The full-scale reference configuration is 12 layers / 768 hidden /
/// 12 heads / 3072 feed-forward / 512 context / 4023 vocabulary; the desk
/// default keeps the same shape at a fraction of the size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub ln_eps: f64,
    /// Output dimension of the regression head.
    #[serde(default = "default_n_properties")]
    pub n_properties: usize,
}

fn default_n_properties() -> usize {
    1
}

impl ModelConfig {
    /// Small CPU-friendly configuration.
    pub fn desk_default(vocab_size: usize) -> Self {
        Self {
            n_layers: 4,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            max_len: 128,
            vocab_size,
            dropout_rate: 0.1,
            ln_eps: 1e-5,
            n_properties: 1,
        }
    }

    /// Tiny configuration for gradient checking (about a thousand params).
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            max_len: 16,
            vocab_size,
            dropout_rate: 0.0,
            ln_eps: 1e-5,
            n_properties: 1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_len < 2 {
            return Err(ModelError::InvalidConfig("max_len must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig("dropout_rate must be in [0,1)".into()));
        }
        if self.vocab_size == 0 || self.n_layers == 0 || self.d_ff == 0 || self.n_properties == 0 {
            return Err(ModelError::InvalidConfig("zero-sized dimension".into()));
        }
        Ok(())
    }
}

/// Parameters of one transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Mat,
    pub ln1_b: Mat,
    pub wq: Mat,
    pub bq: Mat,
    pub wk: Mat,
    pub bk: Mat,
    pub wv: Mat,
    pub bv: Mat,
    pub wo: Mat,
    pub bo: Mat,
    pub ln2_g: Mat,
    pub ln2_b: Mat,
    pub w_ff1: Mat,
    pub b_ff1: Mat,
    pub w_ff2: Mat,
    pub b_ff2: Mat,
}

/// All trainable tensors. Also used as the gradient accumulator and the
/// optimizer moment buffers, which share the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub wte: Mat,
    pub wpe: Mat,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Mat,
    pub lnf_b: Mat,
    /// LM head, vocab x d_model. Zero-initialized so an untrained model
    /// scores every token uniformly.
    pub w_lm: Mat,
    pub reg_w1: Mat,
    pub reg_b1: Mat,
    pub reg_w2: Mat,
    pub reg_b2: Mat,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let layer = || LayerParams {
            ln1_g: Mat::vector(d),
            ln1_b: Mat::vector(d),
            wq: Mat::zeros(d, d),
            bq: Mat::vector(d),
            wk: Mat::zeros(d, d),
            bk: Mat::vector(d),
            wv: Mat::zeros(d, d),
            bv: Mat::vector(d),
            wo: Mat::zeros(d, d),
            bo: Mat::vector(d),
            ln2_g: Mat::vector(d),
            ln2_b: Mat::vector(d),
            w_ff1: Mat::zeros(cfg.d_ff, d),
            b_ff1: Mat::vector(cfg.d_ff),
            w_ff2: Mat::zeros(d, cfg.d_ff),
            b_ff2: Mat::vector(d),
        };
        Self {
            wte: Mat::zeros(cfg.vocab_size, d),
            wpe: Mat::zeros(cfg.max_len, d),
            layers: (0..cfg.n_layers).map(|_| layer()).collect(),
            lnf_g: Mat::vector(d),
            lnf_b: Mat::vector(d),
            w_lm: Mat::zeros(cfg.vocab_size, d),
            reg_w1: Mat::zeros(d, d),
            reg_b1: Mat::vector(d),
            reg_w2: Mat::zeros(cfg.n_properties, d),
            reg_b2: Mat::vector(cfg.n_properties),
        }
    }

    /// Gaussian init (std 0.02) for weights, ones for layer-norm gains,
    /// zeros for biases and the LM head.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 0.02).unwrap();
        let mut p = Self::zeros(cfg);
        {
            let mut randomize = |m: &mut Mat| {
                for x in m.data.iter_mut() {
                    *x = normal.sample(rng);
                }
            };
            randomize(&mut p.wte);
            randomize(&mut p.wpe);
            for layer in &mut p.layers {
                randomize(&mut layer.wq);
                randomize(&mut layer.wk);
                randomize(&mut layer.wv);
                randomize(&mut layer.wo);
                randomize(&mut layer.w_ff1);
                randomize(&mut layer.w_ff2);
            }
            randomize(&mut p.reg_w1);
            randomize(&mut p.reg_w2);
        }
        for layer in &mut p.layers {
            layer.ln1_g.fill(1.0);
            layer.ln2_g.fill(1.0);
        }
        p.lnf_g.fill(1.0);
        // w_lm stays zero: initial logits are exactly uniform.
        p
    }

    /// Named views over every tensor, in a fixed order shared by the
    /// optimizer and the checkpoint format.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = vec![
            ("wte".into(), &self.wte),
            ("wpe".into(), &self.wpe),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (suffix, m) in [
                ("ln1.g", &l.ln1_g),
                ("ln1.b", &l.ln1_b),
                ("attn.wq", &l.wq),
                ("attn.bq", &l.bq),
                ("attn.wk", &l.wk),
                ("attn.bk", &l.bk),
                ("attn.wv", &l.wv),
                ("attn.bv", &l.bv),
                ("attn.wo", &l.wo),
                ("attn.bo", &l.bo),
                ("ln2.g", &l.ln2_g),
                ("ln2.b", &l.ln2_b),
                ("ff.w1", &l.w_ff1),
                ("ff.b1", &l.b_ff1),
                ("ff.w2", &l.w_ff2),
                ("ff.b2", &l.b_ff2),
            ] {
                out.push((format!("layer{i}.{suffix}"), m));
            }
        }
        out.push(("lnf.g".into(), &self.lnf_g));
        out.push(("lnf.b".into(), &self.lnf_b));
        out.push(("lm_head.w".into(), &self.w_lm));
        out.push(("reg.w1".into(), &self.reg_w1));
        out.push(("reg.b1".into(), &self.reg_b1));
        out.push(("reg.w2".into(), &self.reg_w2));
        out.push(("reg.b2".into(), &self.reg_b2));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = vec![
            ("wte".into(), &mut self.wte),
            ("wpe".into(), &mut self.wpe),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (suffix, m) in [
                ("ln1.g", &mut l.ln1_g),
                ("ln1.b", &mut l.ln1_b),
                ("attn.wq", &mut l.wq),
                ("attn.bq", &mut l.bq),
                ("attn.wk", &mut l.wk),
                ("attn.bk", &mut l.bk),
                ("attn.wv", &mut l.wv),
                ("attn.bv", &mut l.bv),
                ("attn.wo", &mut l.wo),
                ("attn.bo", &mut l.bo),
                ("ln2.g", &mut l.ln2_g),
                ("ln2.b", &mut l.ln2_b),
                ("ff.w1", &mut l.w_ff1),
                ("ff.b1", &mut l.b_ff1),
                ("ff.w2", &mut l.w_ff2),
                ("ff.b2", &mut l.b_ff2),
            ] {
                out.push((format!("layer{i}.{suffix}"), m));
            }
        }
        out.push(("lnf.g".into(), &mut self.lnf_g));
        out.push(("lnf.b".into(), &mut self.lnf_b));
        out.push(("lm_head.w".into(), &mut self.w_lm));
        out.push(("reg.w1".into(), &mut self.reg_w1));
        out.push(("reg.b1".into(), &mut self.reg_b1));
        out.push(("reg.w2".into(), &mut self.reg_w2));
        out.push(("reg.b2".into(), &mut self.reg_b2));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// self += other, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, m)| m.iter().all(|x| x.is_finite()))
    }
}

/// A configured model: architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config, rng);
        Ok(Self { config, params })
    }
}
