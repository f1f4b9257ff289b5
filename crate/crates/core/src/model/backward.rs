// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reverse-mode gradients through the transformer.

use ndarray::{s, Array1, Array2, Axis};

use super::forward::{gelu_grad, log_softmax_row, ForwardCache, LnCache};
use super::{BlockParams, Model, Params};

impl Model {
    /// Backpropagates `dlogits` down to residual tap `stop_tap` and returns the
    /// gradient with respect to that tap's (post-injection) activations.
    ///
    /// Parameter gradients are accumulated into `grads` when given; embedding
    /// gradients are only reached when `stop_tap == 0`.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Array2<f32>,
        stop_tap: usize,
        mut grads: Option<&mut Params>,
    ) -> Array2<f32> {
        let p = &self.params;

        let dlnf_out = dlogits.dot(&p.w_head.t());
        if let Some(g) = grads.as_deref_mut() {
            g.w_head += &cache.lnf_out.t().dot(dlogits);
            g.b_head += &dlogits.sum_axis(Axis(0));
        }
        let mut dx = match grads.as_deref_mut() {
            Some(g) => layer_norm_backward(&dlnf_out, &cache.lnf, &p.lnf_g, Some((&mut g.lnf_g, &mut g.lnf_b))),
            None => layer_norm_backward(&dlnf_out, &cache.lnf, &p.lnf_g, None),
        };

        for b in (stop_tap..p.blocks.len()).rev() {
            let block_grads = grads.as_deref_mut().map(|g| &mut g.blocks[b]);
            dx = block_backward(&p.blocks[b], &cache.blocks[b], dx, self.config.n_heads, block_grads);
        }

        if stop_tap == 0 {
            if let Some(g) = grads {
                for (pos, &tok) in cache.tokens.iter().enumerate() {
                    let row = dx.row(pos);
                    let mut te = g.tok_emb.row_mut(tok as usize);
                    te += &row;
                    let mut pe = g.pos_emb.row_mut(pos);
                    pe += &row;
                }
            }
        }
        dx
    }
}

fn block_backward(
    bp: &BlockParams,
    bc: &super::forward::BlockCache,
    dout: Array2<f32>,
    n_heads: usize,
    mut grads: Option<&mut BlockParams>,
) -> Array2<f32> {
    // MLP branch.
    let dact = dout.dot(&bp.w_proj.t());
    let mut dfc = dact;
    dfc.zip_mut_with(&bc.fc, |g, &z| *g *= gelu_grad(z));
    if let Some(g) = grads.as_deref_mut() {
        g.w_proj += &bc.act.t().dot(&dout);
        g.b_proj += &dout.sum_axis(Axis(0));
        g.w_fc += &bc.ln2_out.t().dot(&dfc);
        g.b_fc += &dfc.sum_axis(Axis(0));
    }
    let dln2_out = dfc.dot(&bp.w_fc.t());
    let dln2_in = match grads.as_deref_mut() {
        Some(g) => layer_norm_backward(&dln2_out, &bc.ln2, &bp.ln2_g, Some((&mut g.ln2_g, &mut g.ln2_b))),
        None => layer_norm_backward(&dln2_out, &bc.ln2, &bp.ln2_g, None),
    };
    let dmid = dout + &dln2_in;

    // Attention branch.
    let dheads = dmid.dot(&bp.w_o.t());
    if let Some(g) = grads.as_deref_mut() {
        g.w_o += &bc.heads.t().dot(&dmid);
        g.b_o += &dmid.sum_axis(Axis(0));
    }
    let dqkv = attention_backward(&dheads, &bc.qkv, &bc.att, n_heads);
    if let Some(g) = grads.as_deref_mut() {
        g.w_qkv += &bc.ln1_out.t().dot(&dqkv);
        g.b_qkv += &dqkv.sum_axis(Axis(0));
    }
    let dln1_out = dqkv.dot(&bp.w_qkv.t());
    let dln1_in = match grads {
        Some(g) => layer_norm_backward(&dln1_out, &bc.ln1, &bp.ln1_g, Some((&mut g.ln1_g, &mut g.ln1_b))),
        None => layer_norm_backward(&dln1_out, &bc.ln1, &bp.ln1_g, None),
    };
    dmid + &dln1_in
}

fn layer_norm_backward(
    dout: &Array2<f32>,
    cache: &LnCache,
    gain: &Array1<f32>,
    grads: Option<(&mut Array1<f32>, &mut Array1<f32>)>,
) -> Array2<f32> {
    if let Some((dg, db)) = grads {
        *dg += &(dout * &cache.xhat).sum_axis(Axis(0));
        *db += &dout.sum_axis(Axis(0));
    }
    let d = dout.ncols() as f32;
    let dxhat = dout * gain;
    let mut dx = Array2::<f32>::zeros(dout.dim());
    for i in 0..dout.nrows() {
        let gr = dxhat.row(i);
        let xr = cache.xhat.row(i);
        let mean_g = gr.sum() / d;
        let mean_gx = gr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum::<f32>() / d;
        let r = cache.rstd[i];
        for ((o, &gv), &xv) in dx.row_mut(i).iter_mut().zip(gr.iter()).zip(xr.iter()) {
            *o = r * (gv - mean_g - xv * mean_gx);
        }
    }
    dx
}

fn attention_backward(dheads: &Array2<f32>, qkv: &Array2<f32>, atts: &[Array2<f32>], n_heads: usize) -> Array2<f32> {
    let d = dheads.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut dqkv = Array2::<f32>::zeros(qkv.dim());
    for (h, att) in atts.iter().enumerate() {
        let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let dout = dheads.slice(s![.., h * dh..(h + 1) * dh]);

        let datt = dout.dot(&v.t());
        let dv = att.t().dot(&dout);
        let mut dscores = Array2::<f32>::zeros(att.dim());
        for i in 0..att.nrows() {
            let a = att.row(i);
            let g = datt.row(i);
            let dot: f32 = a.iter().zip(g.iter()).map(|(x, y)| x * y).sum();
            for (o, (&av, &gv)) in dscores.row_mut(i).iter_mut().zip(a.iter().zip(g.iter())) {
                *o = av * (gv - dot) * scale;
            }
        }
        let dq = dscores.dot(&k);
        let dk = dscores.t().dot(&q);
        dqkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dq);
        dqkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&dk);
        dqkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&dv);
    }
    dqkv
}

/// Summed token cross-entropy of `logits` against `targets` and its gradient.
///
/// Row `p` of `logits` predicts `targets[p]`; the loss is accumulated in `f64`.
pub(crate) fn cross_entropy_sum(logits: &Array2<f32>, targets: &[u32]) -> (f64, Array2<f32>) {
    debug_assert_eq!(logits.nrows(), targets.len());
    let mut loss = 0.0;
    let mut grad = Array2::<f32>::zeros(logits.dim());
    for (p, (row, &target)) in logits.rows().into_iter().zip(targets).enumerate() {
        let logp = log_softmax_row(row.as_slice().expect("contiguous row"));
        loss -= logp[target as usize];
        for (g, lp) in grad.row_mut(p).iter_mut().zip(&logp) {
            *g = lp.exp() as f32;
        }
        grad[[p, target as usize]] -= 1.0;
    }
    (loss, grad)
}
