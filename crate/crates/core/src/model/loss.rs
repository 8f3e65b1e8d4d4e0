//! Training objectives: next-token cross-entropy and regression MSE.

use rand_chacha::ChaCha8Rng;

use super::forward::Cache;
use super::linalg::{linear, linear_backward, log_softmax, silu, silu_grad, Mat};
use super::{Model, ModelError, ModelParams};
use crate::seq::TokenSeq;

/// Per-sequence cross-entropy pieces: summed negative log-likelihood over
/// counted positions, the number of counted positions, and the unnormalized
/// dlogits (gradient of the summed NLL).
pub(crate) fn next_token_nll(cache: &Cache, mask: &[u8]) -> (f64, usize, Mat) {
    let t_len = cache.ids.len();
    let vocab = cache.logits.cols;
    let mut nll = 0.0;
    let mut count = 0;
    let mut dlogits = Mat::zeros(t_len, vocab);
    for t in 0..t_len.saturating_sub(1) {
        // Predict the token at t+1; skip positions whose target is padding.
        if mask.get(t + 1).copied().unwrap_or(0) != 1 {
            continue;
        }
        let target = cache.ids[t + 1] as usize;
        let ls = log_softmax(cache.logits.row(t));
        nll -= ls[target];
        count += 1;
        let drow = dlogits.row_mut(t);
        for (v, l) in ls.iter().enumerate() {
            drow[v] = l.exp();
        }
        drow[target] -= 1.0;
    }
    (nll, count, dlogits)
}

/// Mean next-token negative log-likelihood over all non-PAD positions of the
/// batch, with gradients for every parameter.
pub fn loss_pretrain(
    model: &Model,
    batch: &[TokenSeq],
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParams), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::ShapeMismatch("empty batch".into()));
    }
    let mut per_seq: Vec<(Cache, Mat, f64)> = Vec::with_capacity(batch.len());
    let mut total_nll = 0.0;
    let mut total_count = 0usize;
    for seq in batch {
        let cache = model.forward(&seq.ids, dropout.as_deref_mut())?;
        let (nll, count, dlogits) = next_token_nll(&cache, &seq.attention_mask);
        total_nll += nll;
        total_count += count;
        per_seq.push((cache, dlogits, 0.0));
    }
    if total_count == 0 {
        return Err(ModelError::ShapeMismatch("no supervised positions in batch".into()));
    }
    let inv = 1.0 / total_count as f64;
    let mut grads = ModelParams::zeros(&model.config);
    for (cache, mut dlogits, _) in per_seq {
        for g in dlogits.data.iter_mut() {
            *g *= inv;
        }
        model.backward(&cache, Some(&dlogits), None, &mut grads);
    }
    Ok((total_nll * inv, grads))
}

/// Regression head forward from cached hidden states. Returns the pooled
/// vector, head pre-activation, activation, prediction, and the pooling
/// count; everything the backward pass needs.
pub(crate) struct RegressionTrace {
    pub pooled: Mat,
    pub pre: Mat,
    pub act: Mat,
    pub yhat: Vec<f64>,
    pub count: f64,
}

pub(crate) fn regression_forward(model: &Model, cache: &Cache, mask: &[u8]) -> RegressionTrace {
    let d = model.config.d_model;
    let mut pooled = Mat::vector(d);
    let mut count = 0.0;
    for t in 0..cache.hidden.rows {
        if mask.get(t).copied().unwrap_or(1) == 1 {
            count += 1.0;
            for (pi, hi) in pooled.row_mut(0).iter_mut().zip(cache.hidden.row(t)) {
                *pi += hi;
            }
        }
    }
    if count > 0.0 {
        for v in pooled.data.iter_mut() {
            *v /= count;
        }
    }
    let pre = linear(&pooled, &model.params.reg_w1, Some(&model.params.reg_b1));
    let mut act = Mat::vector(d);
    for i in 0..d {
        *act.at_mut(0, i) = silu(pre.at(0, i));
    }
    let out = linear(&act, &model.params.reg_w2, Some(&model.params.reg_b2));
    RegressionTrace { pooled, pre, act, yhat: out.row(0).to_vec(), count }
}

/// Backward through the regression head given d(yhat); accumulates head
/// gradients and returns the gradient at the final hidden states.
pub(crate) fn regression_backward(
    model: &Model,
    cache: &Cache,
    mask: &[u8],
    trace: &RegressionTrace,
    dy: &[f64],
    grads: &mut ModelParams,
) -> Mat {
    let d = model.config.d_model;
    let mut dy_mat = Mat::vector(dy.len());
    dy_mat.row_mut(0).copy_from_slice(dy);
    let mut d_act = Mat::vector(d);
    linear_backward(
        &dy_mat,
        &trace.act,
        &model.params.reg_w2,
        &mut grads.reg_w2,
        Some(&mut grads.reg_b2),
        &mut d_act,
    );
    let mut d_pre = Mat::vector(d);
    for i in 0..d {
        *d_pre.at_mut(0, i) = d_act.at(0, i) * silu_grad(trace.pre.at(0, i));
    }
    let mut d_pooled = Mat::vector(d);
    linear_backward(
        &d_pre,
        &trace.pooled,
        &model.params.reg_w1,
        &mut grads.reg_w1,
        Some(&mut grads.reg_b1),
        &mut d_pooled,
    );
    let mut d_hidden = Mat::zeros(cache.hidden.rows, d);
    if trace.count > 0.0 {
        let inv = 1.0 / trace.count;
        for t in 0..cache.hidden.rows {
            if mask.get(t).copied().unwrap_or(1) == 1 {
                for (dh, dp) in d_hidden.row_mut(t).iter_mut().zip(d_pooled.row(0)) {
                    *dh = dp * inv;
                }
            }
        }
    }
    d_hidden
}

/// Mean squared error `(1/N) sum ||y - yhat||^2` over the batch, with
/// gradients flowing through both the head and the backbone.
pub fn loss_finetune(
    model: &Model,
    batch: &[TokenSeq],
    targets: &[Vec<f64>],
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParams), ModelError> {
    if batch.len() != targets.len() {
        return Err(ModelError::LengthMismatch(batch.len(), targets.len()));
    }
    if batch.is_empty() {
        return Err(ModelError::ShapeMismatch("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = ModelParams::zeros(&model.config);
    let mut loss = 0.0;
    for (seq, y) in batch.iter().zip(targets) {
        let cache = model.forward(&seq.ids, dropout.as_deref_mut())?;
        let trace = regression_forward(model, &cache, &seq.attention_mask);
        if trace.yhat.len() != y.len() {
            return Err(ModelError::LengthMismatch(trace.yhat.len(), y.len()));
        }
        let mut dy = vec![0.0; y.len()];
        for (k, (&yk, &yhk)) in y.iter().zip(&trace.yhat).enumerate() {
            let err = yhk - yk;
            loss += err * err / n;
            dy[k] = 2.0 * err / n;
        }
        let d_hidden = regression_backward(model, &cache, &seq.attention_mask, &trace, &dy, &mut grads);
        model.backward(&cache, None, Some(&d_hidden), &mut grads);
    }
    Ok((loss, grads))
}

/// Predictions for a batch (inference mode).
pub fn regression_outputs(model: &Model, batch: &[TokenSeq]) -> Result<Vec<Vec<f64>>, ModelError> {
    batch
        .iter()
        .map(|seq| model.forward_regress(&seq.ids, &seq.attention_mask))
        .collect()
}
