//! Exact reverse-mode gradients for the transformer forward pass.

use super::forward::Cache;
use super::linalg::{linear_backward, silu_grad, Mat};
use super::{Model, ModelParams};

/// dx for a layer-norm given dy, the saved normalized input and 1/std, and
/// the gain. Also accumulates dgain/dbias.
fn layer_norm_backward(
    dy: &Mat,
    xhat: &Mat,
    rstd: &[f64],
    g: &Mat,
    dg: &mut Mat,
    db: &mut Mat,
) -> Mat {
    let d = dy.cols;
    let mut dx = Mat::zeros(dy.rows, d);
    for t in 0..dy.rows {
        let dyt = dy.row(t);
        let xh = xhat.row(t);
        {
            let dgr = dg.row_mut(0);
            for i in 0..d {
                dgr[i] += dyt[i] * xh[i];
            }
        }
        {
            let dbr = db.row_mut(0);
            for i in 0..d {
                dbr[i] += dyt[i];
            }
        }
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        let gr = g.row(0);
        for i in 0..d {
            let dxhat = dyt[i] * gr[i];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xh[i];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let dxt = dx.row_mut(t);
        for i in 0..d {
            let dxhat = dyt[i] * gr[i];
            dxt[i] = rstd[t] * (dxhat - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Rebuild a layer-norm output from its cached normalized input.
fn ln_output(xhat: &Mat, g: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(xhat.rows, xhat.cols);
    for t in 0..xhat.rows {
        let xh = xhat.row(t);
        let o = out.row_mut(t);
        for i in 0..xhat.cols {
            o[i] = xh[i] * g.at(0, i) + b.at(0, i);
        }
    }
    out
}

impl Model {
    /// Accumulate gradients into `grads`.
    ///
    /// `dlogits` is the loss gradient at the LM head output (may be `None`
    /// when only `d_hidden_extra` drives the loss, e.g. the regression
    /// head); `d_hidden_extra` is an additional gradient injected at the
    /// final hidden states.
    pub fn backward(
        &self,
        cache: &Cache,
        dlogits: Option<&Mat>,
        d_hidden_extra: Option<&Mat>,
        grads: &mut ModelParams,
    ) {
        let cfg = &self.config;
        let p = &self.params;
        let t_len = cache.ids.len();
        let d = cfg.d_model;
        let h = cfg.n_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let rate = cache.dropout_rate;
        let train = rate > 0.0;

        let mut dhidden = Mat::zeros(t_len, d);
        if let Some(dl) = dlogits {
            linear_backward(dl, &cache.hidden, &p.w_lm, &mut grads.w_lm, None, &mut dhidden);
        }
        if let Some(extra) = d_hidden_extra {
            dhidden.add_assign(extra);
        }

        // Final layer norm.
        let mut dx = layer_norm_backward(
            &dhidden,
            &cache.xhatf,
            &cache.rstdf,
            &p.lnf_g,
            &mut grads.lnf_g,
            &mut grads.lnf_b,
        );

        for l in (0..cfg.n_layers).rev() {
            let layer = &p.layers[l];
            let glayer = &mut grads.layers[l];
            let lc = &cache.layers[l];

            // Feed-forward branch: x_out = x_mid + drop(ff2(silu(ff1(ln2(x_mid))))).
            let mut d_ff2out = dx.clone();
            if train {
                for t in 0..t_len {
                    for i in 0..d {
                        *d_ff2out.at_mut(t, i) *= lc.ff_drop.at(t, i) / (1.0 - rate);
                    }
                }
            }
            let mut d_ff_act = Mat::zeros(t_len, cfg.d_ff);
            linear_backward(
                &d_ff2out,
                &lc.ff_act,
                &layer.w_ff2,
                &mut glayer.w_ff2,
                Some(&mut glayer.b_ff2),
                &mut d_ff_act,
            );
            let mut d_ff_pre = Mat::zeros(t_len, cfg.d_ff);
            for t in 0..t_len {
                let da = d_ff_act.row(t);
                let pre = lc.ff_pre.row(t);
                let dp = d_ff_pre.row_mut(t);
                for j in 0..cfg.d_ff {
                    dp[j] = da[j] * silu_grad(pre[j]);
                }
            }
            let b_in = ln_output(&lc.xhat2, &layer.ln2_g, &layer.ln2_b);
            let mut d_b_in = Mat::zeros(t_len, d);
            linear_backward(
                &d_ff_pre,
                &b_in,
                &layer.w_ff1,
                &mut glayer.w_ff1,
                Some(&mut glayer.b_ff1),
                &mut d_b_in,
            );
            let d_from_ln2 = layer_norm_backward(
                &d_b_in,
                &lc.xhat2,
                &lc.rstd2,
                &layer.ln2_g,
                &mut glayer.ln2_g,
                &mut glayer.ln2_b,
            );
            // dx now holds the gradient at x_mid (residual + branch).
            dx.add_assign(&d_from_ln2);

            // Attention branch: x_mid = x_in + wo(ctx) + bo.
            let mut d_ctx = Mat::zeros(t_len, d);
            linear_backward(
                &dx,
                &lc.ctx,
                &layer.wo,
                &mut glayer.wo,
                Some(&mut glayer.bo),
                &mut d_ctx,
            );
            let mut dq = Mat::zeros(t_len, d);
            let mut dk = Mat::zeros(t_len, d);
            let mut dv = Mat::zeros(t_len, d);
            for head in 0..h {
                let off = head * dh;
                let pmat = &lc.probs[head];
                let dmask = &lc.attn_drop[head];
                // dpdrop and dv.
                let mut dp = Mat::zeros(t_len, t_len);
                for i in 0..t_len {
                    let dctx_i = &d_ctx.row(i)[off..off + dh];
                    for j in 0..=i {
                        let keep = if train { dmask.at(i, j) / (1.0 - rate) } else { 1.0 };
                        let pij = pmat.at(i, j) * keep;
                        let vj = &lc.v.row(j)[off..off + dh];
                        let dot: f64 = dctx_i.iter().zip(vj).map(|(a, b)| a * b).sum();
                        *dp.at_mut(i, j) = dot * keep;
                        if pij != 0.0 {
                            let dvj = &mut dv.row_mut(j)[off..off + dh];
                            for (dvc, dc) in dvj.iter_mut().zip(dctx_i) {
                                *dvc += pij * dc;
                            }
                        }
                    }
                }
                // Softmax backward, then scores -> q, k.
                for i in 0..t_len {
                    let mut inner = 0.0;
                    for j in 0..=i {
                        inner += dp.at(i, j) * pmat.at(i, j);
                    }
                    let qi: Vec<f64> = lc.q.row(i)[off..off + dh].to_vec();
                    let mut dqi = vec![0.0; dh];
                    for j in 0..=i {
                        let ds = pmat.at(i, j) * (dp.at(i, j) - inner) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &lc.k.row(j)[off..off + dh];
                        for c in 0..dh {
                            dqi[c] += ds * kj[c];
                        }
                        let dkj = &mut dk.row_mut(j)[off..off + dh];
                        for (c, dkc) in dkj.iter_mut().enumerate() {
                            *dkc += ds * qi[c];
                        }
                    }
                    let dq_row = &mut dq.row_mut(i)[off..off + dh];
                    for (c, val) in dqi.iter().enumerate() {
                        dq_row[c] += val;
                    }
                }
            }
            let a = ln_output(&lc.xhat1, &layer.ln1_g, &layer.ln1_b);
            let mut d_a = Mat::zeros(t_len, d);
            linear_backward(&dq, &a, &layer.wq, &mut glayer.wq, Some(&mut glayer.bq), &mut d_a);
            linear_backward(&dk, &a, &layer.wk, &mut glayer.wk, Some(&mut glayer.bk), &mut d_a);
            linear_backward(&dv, &a, &layer.wv, &mut glayer.wv, Some(&mut glayer.bv), &mut d_a);
            let d_from_ln1 = layer_norm_backward(
                &d_a,
                &lc.xhat1,
                &lc.rstd1,
                &layer.ln1_g,
                &mut glayer.ln1_g,
                &mut glayer.ln1_b,
            );
            dx.add_assign(&d_from_ln1);
        }

        // Embeddings.
        for (t, &id) in cache.ids.iter().enumerate() {
            let dxt = dx.row(t);
            let wte_row = grads.wte.row_mut(id as usize);
            for i in 0..d {
                wte_row[i] += dxt[i];
            }
            let wpe_row = grads.wpe.row_mut(t);
            for i in 0..d {
                wpe_row[i] += dxt[i];
            }
        }
    }
}
