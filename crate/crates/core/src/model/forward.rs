//! Forward passes: full-sequence with an activation cache for backprop, and
//! incremental single-token decoding with a KV cache for generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{linear, silu, softmax_inplace, Mat};
use super::{Model, ModelError};

/// Causal scaled-dot-product attention over whole matrices.
///
/// `q`, `k`, `v` are T x d; position `i` attends to positions `0..=i`.
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> Result<Mat, ModelError> {
    if q.cols != k.cols || k.rows != v.rows || q.rows != k.rows {
        return Err(ModelError::ShapeMismatch(format!(
            "attention got q {}x{}, k {}x{}, v {}x{}",
            q.rows, q.cols, k.rows, k.cols, v.rows, v.cols
        )));
    }
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut out = Mat::zeros(q.rows, v.cols);
    let mut scores = vec![0.0; q.rows];
    for i in 0..q.rows {
        for (j, s) in scores.iter_mut().enumerate().take(i + 1) {
            let mut dot = 0.0;
            for c in 0..q.cols {
                dot += q.at(i, c) * k.at(j, c);
            }
            *s = dot * scale;
        }
        softmax_inplace(&mut scores[..=i]);
        let row = out.row_mut(i);
        for j in 0..=i {
            let p = scores[j];
            for (o, vv) in row.iter_mut().zip(v.row(j)) {
                *o += p * vv;
            }
        }
    }
    Ok(out)
}

/// Saved activations for one transformer block.
pub(super) struct LayerCache {
    /// LayerNorm-1 normalized input and reciprocal std, per position.
    pub xhat1: Mat,
    pub rstd1: Vec<f64>,
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Post-softmax attention probabilities, one T x T lower-triangular
    /// matrix per head.
    pub probs: Vec<Mat>,
    /// Dropout keep-masks over attention probabilities (empty when eval).
    pub attn_drop: Vec<Mat>,
    /// Concatenated per-head context vectors (input to the output proj).
    pub ctx: Mat,
    pub xhat2: Mat,
    pub rstd2: Vec<f64>,
    /// Feed-forward pre-activation.
    pub ff_pre: Mat,
    /// SiLU output (input to the second feed-forward matrix).
    pub ff_act: Mat,
    /// Dropout keep-mask over the feed-forward output (empty when eval).
    pub ff_drop: Mat,
}

/// Full activation record of one forward pass.
pub struct Cache {
    pub(super) ids: Vec<u32>,
    pub(super) layers: Vec<LayerCache>,
    pub(super) xhatf: Mat,
    pub(super) rstdf: Vec<f64>,
    /// Final hidden states after the last layer norm.
    pub hidden: Mat,
    /// Next-token logits, T x vocab.
    pub logits: Mat,
    pub(super) dropout_rate: f64,
}

fn layer_norm(x: &Mat, g: &Mat, b: &Mat, eps: f64) -> (Mat, Mat, Vec<f64>) {
    let d = x.cols;
    let mut xhat = Mat::zeros(x.rows, d);
    let mut out = Mat::zeros(x.rows, d);
    let mut rstd = vec![0.0; x.rows];
    for t in 0..x.rows {
        let row = x.row(t);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + eps).sqrt();
        rstd[t] = r;
        let xh = xhat.row_mut(t);
        let o = out.row_mut(t);
        for i in 0..d {
            xh[i] = (row[i] - mean) * r;
            o[i] = xh[i] * g.at(0, i) + b.at(0, i);
        }
    }
    (out, xhat, rstd)
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for x in m.data.iter_mut() {
        *x = if rng.random::<f64>() < rate { 0.0 } else { 1.0 };
    }
    m
}

impl Model {
    /// Forward pass over `ids`, returning the full activation cache.
    ///
    /// `dropout`: pass an RNG to enable training-mode dropout at the
    /// configured rate; `None` runs deterministic inference.
    pub fn forward(&self, ids: &[u32], dropout: Option<&mut ChaCha8Rng>) -> Result<Cache, ModelError> {
        let t_len = ids.len();
        if t_len == 0 {
            return Err(ModelError::ShapeMismatch("empty sequence".into()));
        }
        if t_len > self.config.max_len {
            return Err(ModelError::SequenceTooLong { len: t_len, max: self.config.max_len });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::ShapeMismatch(format!(
                "token id {bad} out of vocabulary ({})",
                self.config.vocab_size
            )));
        }
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.d_model;
        let h = cfg.n_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let rate = cfg.dropout_rate;
        let mut drop_rng = dropout;
        let train = drop_rng.is_some() && rate > 0.0;

        let mut x = Mat::zeros(t_len, d);
        for (t, &id) in ids.iter().enumerate() {
            let row = x.row_mut(t);
            for i in 0..d {
                row[i] = p.wte.at(id as usize, i) + p.wpe.at(t, i);
            }
        }

        let mut layer_caches = Vec::with_capacity(cfg.n_layers);
        for layer in &p.layers {
            let (a, xhat1, rstd1) = layer_norm(&x, &layer.ln1_g, &layer.ln1_b, cfg.ln_eps);
            let q = linear(&a, &layer.wq, Some(&layer.bq));
            let k = linear(&a, &layer.wk, Some(&layer.bk));
            let v = linear(&a, &layer.wv, Some(&layer.bv));

            let mut probs = Vec::with_capacity(h);
            let mut attn_drop = Vec::with_capacity(h);
            let mut ctx = Mat::zeros(t_len, d);
            for head in 0..h {
                let off = head * dh;
                let mut pmat = Mat::zeros(t_len, t_len);
                for i in 0..t_len {
                    let qi = &q.row(i)[off..off + dh];
                    for j in 0..=i {
                        let kj = &k.row(j)[off..off + dh];
                        let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                        *pmat.at_mut(i, j) = dot * scale;
                    }
                    softmax_inplace(&mut pmat.row_mut(i)[..=i]);
                }
                let dmask = if train {
                    let mut m = Mat::zeros(t_len, t_len);
                    let rng = drop_rng.as_deref_mut().unwrap();
                    for i in 0..t_len {
                        for j in 0..=i {
                            *m.at_mut(i, j) = if rng.random::<f64>() < rate { 0.0 } else { 1.0 };
                        }
                    }
                    m
                } else {
                    Mat::zeros(0, 0)
                };
                for i in 0..t_len {
                    let ctx_row = &mut ctx.row_mut(i)[off..off + dh];
                    for j in 0..=i {
                        let mut pij = pmat.at(i, j);
                        if train {
                            pij = pij * dmask.at(i, j) / (1.0 - rate);
                        }
                        if pij == 0.0 {
                            continue;
                        }
                        let vj = &v.row(j)[off..off + dh];
                        for (c, vv) in ctx_row.iter_mut().zip(vj) {
                            *c += pij * vv;
                        }
                    }
                }
                probs.push(pmat);
                attn_drop.push(dmask);
            }
            let att_out = linear(&ctx, &layer.wo, Some(&layer.bo));
            for t in 0..t_len {
                for (xi, ai) in x.row_mut(t).iter_mut().zip(att_out.row(t)) {
                    *xi += ai;
                }
            }

            let (b_in, xhat2, rstd2) = layer_norm(&x, &layer.ln2_g, &layer.ln2_b, cfg.ln_eps);
            let ff_pre = linear(&b_in, &layer.w_ff1, Some(&layer.b_ff1));
            let mut ff_act = Mat::zeros(t_len, cfg.d_ff);
            for t in 0..t_len {
                for (o, &z) in ff_act.row_mut(t).iter_mut().zip(ff_pre.row(t)) {
                    *o = silu(z);
                }
            }
            let mut ff_out = linear(&ff_act, &layer.w_ff2, Some(&layer.b_ff2));
            let ff_drop = if train {
                let rng = drop_rng.as_deref_mut().unwrap();
                let m = dropout_mask(t_len, d, rate, rng);
                for t in 0..t_len {
                    for i in 0..d {
                        *ff_out.at_mut(t, i) *= m.at(t, i) / (1.0 - rate);
                    }
                }
                m
            } else {
                Mat::zeros(0, 0)
            };
            for t in 0..t_len {
                for (xi, fi) in x.row_mut(t).iter_mut().zip(ff_out.row(t)) {
                    *xi += fi;
                }
            }

            layer_caches.push(LayerCache {
                xhat1,
                rstd1,
                q,
                k,
                v,
                probs,
                attn_drop,
                ctx,
                xhat2,
                rstd2,
                ff_pre,
                ff_act,
                ff_drop,
            });
        }
        let (hidden, xhatf, rstdf) = layer_norm(&x, &p.lnf_g, &p.lnf_b, cfg.ln_eps);
        let logits = linear(&hidden, &p.w_lm, None);

        Ok(Cache {
            ids: ids.to_vec(),
            layers: layer_caches,
            xhatf,
            rstdf,
            hidden,
            logits,
            dropout_rate: if train { rate } else { 0.0 },
        })
    }

    /// Per-position next-token logits (inference mode).
    pub fn forward_lm(&self, ids: &[u32]) -> Result<Mat, ModelError> {
        Ok(self.forward(ids, None)?.logits)
    }

    /// Property prediction: masked mean over final hidden states, through
    /// the two-layer regression head.
    pub fn forward_regress(&self, ids: &[u32], mask: &[u8]) -> Result<Vec<f64>, ModelError> {
        let cache = self.forward(ids, None)?;
        Ok(self.regress_from_hidden(&cache.hidden, mask))
    }

    pub(super) fn regress_from_hidden(&self, hidden: &Mat, mask: &[u8]) -> Vec<f64> {
        let d = self.config.d_model;
        let mut pooled = Mat::vector(d);
        let mut count = 0.0;
        for t in 0..hidden.rows {
            if mask.get(t).copied().unwrap_or(1) == 1 {
                count += 1.0;
                for (pi, hi) in pooled.row_mut(0).iter_mut().zip(hidden.row(t)) {
                    *pi += hi;
                }
            }
        }
        if count > 0.0 {
            for v in pooled.data.iter_mut() {
                *v /= count;
            }
        }
        let h1 = linear(&pooled, &self.params.reg_w1, Some(&self.params.reg_b1));
        let mut act = Mat::vector(d);
        for i in 0..d {
            *act.at_mut(0, i) = silu(h1.at(0, i));
        }
        let out = linear(&act, &self.params.reg_w2, Some(&self.params.reg_b2));
        out.row(0).to_vec()
    }
}

/// KV cache for token-at-a-time decoding. Produces logits identical to a
/// full re-forward over the growing prefix (inference mode only).
pub struct IncrementalState {
    /// Per layer: cached K and V, each max_len x d_model, filled up to `len`.
    keys: Vec<Mat>,
    values: Vec<Mat>,
    len: usize,
}

impl IncrementalState {
    pub fn new(model: &Model) -> Self {
        let cfg = &model.config;
        Self {
            keys: (0..cfg.n_layers).map(|_| Mat::zeros(cfg.max_len, cfg.d_model)).collect(),
            values: (0..cfg.n_layers).map(|_| Mat::zeros(cfg.max_len, cfg.d_model)).collect(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feed one token, returning the next-token logits at its position.
    pub fn step(&mut self, model: &Model, id: u32) -> Result<Vec<f64>, ModelError> {
        let cfg = &model.config;
        let p = &model.params;
        if self.len >= cfg.max_len {
            return Err(ModelError::SequenceTooLong { len: self.len + 1, max: cfg.max_len });
        }
        if id as usize >= cfg.vocab_size {
            return Err(ModelError::ShapeMismatch(format!("token id {id} out of vocabulary")));
        }
        let t = self.len;
        let d = cfg.d_model;
        let h = cfg.n_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = Mat::vector(d);
        for i in 0..d {
            *x.at_mut(0, i) = p.wte.at(id as usize, i) + p.wpe.at(t, i);
        }
        for (l, layer) in p.layers.iter().enumerate() {
            let (a, _, _) = layer_norm(&x, &layer.ln1_g, &layer.ln1_b, cfg.ln_eps);
            let q = linear(&a, &layer.wq, Some(&layer.bq));
            let k = linear(&a, &layer.wk, Some(&layer.bk));
            let v = linear(&a, &layer.wv, Some(&layer.bv));
            self.keys[l].row_mut(t).copy_from_slice(k.row(0));
            self.values[l].row_mut(t).copy_from_slice(v.row(0));

            let mut ctx = Mat::vector(d);
            for head in 0..h {
                let off = head * dh;
                let qh = &q.row(0)[off..off + dh];
                let mut scores = vec![0.0; t + 1];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &self.keys[l].row(j)[off..off + dh];
                    *s = qh.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_inplace(&mut scores);
                let ctx_row = &mut ctx.row_mut(0)[off..off + dh];
                for (j, &s) in scores.iter().enumerate() {
                    let vj = &self.values[l].row(j)[off..off + dh];
                    for (c, vv) in ctx_row.iter_mut().zip(vj) {
                        *c += s * vv;
                    }
                }
            }
            let att_out = linear(&ctx, &layer.wo, Some(&layer.bo));
            for (xi, ai) in x.row_mut(0).iter_mut().zip(att_out.row(0)) {
                *xi += ai;
            }
            let (b_in, _, _) = layer_norm(&x, &layer.ln2_g, &layer.ln2_b, cfg.ln_eps);
            let ff_pre = linear(&b_in, &layer.w_ff1, Some(&layer.b_ff1));
            let mut ff_act = Mat::vector(cfg.d_ff);
            for i in 0..cfg.d_ff {
                *ff_act.at_mut(0, i) = silu(ff_pre.at(0, i));
            }
            let ff_out = linear(&ff_act, &layer.w_ff2, Some(&layer.b_ff2));
            for (xi, fi) in x.row_mut(0).iter_mut().zip(ff_out.row(0)) {
                *xi += fi;
            }
        }
        let (hidden, _, _) = layer_norm(&x, &p.lnf_g, &p.lnf_b, cfg.ln_eps);
        let logits = linear(&hidden, &p.w_lm, None);
        self.len += 1;
        Ok(logits.row(0).to_vec())
    }
}

/// Probability of each vocabulary entry at the last position (softmax of the
/// last logits row). Used by sampling and KL computations.
pub fn probs_from_logits(logits_row: &[f64]) -> Vec<f64> {
    let mut p = logits_row.to_vec();
    softmax_inplace(&mut p);
    p
}
