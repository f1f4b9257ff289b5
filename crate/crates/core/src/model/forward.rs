// SPDX-License-Identifier: MIT OR Apache-2.0

use ndarray::{s, Array1, Array2};

use super::{ActivationTrace, Injection, Model};
use crate::error::Result;

pub(crate) const LN_EPS: f32 = 1e-5;
const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)
const GELU_A: f32 = 0.044_715;

/// Logits (`[positions, vocab]`) plus the recorded activations.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Array2<f32>,
    pub trace: ActivationTrace,
}

pub(crate) struct LnCache {
    pub xhat: Array2<f32>,
    pub rstd: Array1<f32>,
}

pub(crate) struct BlockCache {
    pub ln1: LnCache,
    pub ln1_out: Array2<f32>,
    pub qkv: Array2<f32>,
    pub att: Vec<Array2<f32>>,
    pub heads: Array2<f32>,
    pub ln2: LnCache,
    pub ln2_out: Array2<f32>,
    pub fc: Array2<f32>,
    pub act: Array2<f32>,
}

/// Intermediates kept for a backward pass.
pub(crate) struct ForwardCache {
    pub tokens: Vec<u32>,
    pub blocks: Vec<BlockCache>,
    pub lnf: LnCache,
    pub lnf_out: Array2<f32>,
}

impl Model {
    /// Runs the model over `tokens`, adding every injection at its tap for all
    /// positions and recording post-injection activations for `record_layers`.
    pub fn forward(
        &self,
        tokens: &[u32],
        injections: &[Injection],
        record_layers: &[usize],
    ) -> Result<ForwardOutput> {
        self.forward_scoped(tokens, injections, None, record_layers)
    }

    /// Like [`Model::forward`], but injections only touch positions
    /// `0..inject_until` when a limit is given.
    pub fn forward_scoped(
        &self,
        tokens: &[u32],
        injections: &[Injection],
        inject_until: Option<usize>,
        record_layers: &[usize],
    ) -> Result<ForwardOutput> {
        self.validate_call(tokens, injections, record_layers)?;
        Ok(self.run(tokens, injections, inject_until, record_layers, false).0)
    }

    pub(crate) fn forward_cached(
        &self,
        tokens: &[u32],
        injections: &[Injection],
    ) -> Result<(ForwardOutput, ForwardCache)> {
        self.validate_call(tokens, injections, &[])?;
        let (out, cache) = self.run(tokens, injections, None, &[], true);
        Ok((out, cache.expect("cache requested")))
    }

    fn validate_call(&self, tokens: &[u32], injections: &[Injection], record: &[usize]) -> Result<()> {
        self.check_tokens(tokens)?;
        self.check_injections(injections)?;
        for &layer in record {
            self.config.check_layer(layer)?;
        }
        Ok(())
    }

    fn run(
        &self,
        tokens: &[u32],
        injections: &[Injection],
        inject_until: Option<usize>,
        record: &[usize],
        want_cache: bool,
    ) -> (ForwardOutput, Option<ForwardCache>) {
        let p = &self.params;
        let n = tokens.len();
        let d = self.config.d_model;

        let mut x = Array2::<f32>::zeros((n, d));
        for (pos, &tok) in tokens.iter().enumerate() {
            let mut row = x.row_mut(pos);
            row.assign(&p.tok_emb.row(tok as usize));
            row += &p.pos_emb.row(pos);
        }

        let mut trace = ActivationTrace::default();
        inject(&mut x, 0, injections, inject_until);
        if record.contains(&0) {
            trace.per_layer.insert(0, x.clone());
        }

        let mut block_caches = Vec::with_capacity(if want_cache { p.blocks.len() } else { 0 });
        for (b, bp) in p.blocks.iter().enumerate() {
            let (ln1_out, ln1) = layer_norm(&x, &bp.ln1_g, &bp.ln1_b);
            let qkv = ln1_out.dot(&bp.w_qkv) + &bp.b_qkv;
            let (heads, att) = attention(&qkv, self.config.n_heads);
            x += &(heads.dot(&bp.w_o) + &bp.b_o);

            let (ln2_out, ln2) = layer_norm(&x, &bp.ln2_g, &bp.ln2_b);
            let fc = ln2_out.dot(&bp.w_fc) + &bp.b_fc;
            let act = fc.mapv(gelu);
            x += &(act.dot(&bp.w_proj) + &bp.b_proj);

            let tap = b + 1;
            inject(&mut x, tap, injections, inject_until);
            if record.contains(&tap) {
                trace.per_layer.insert(tap, x.clone());
            }

            if want_cache {
                block_caches.push(BlockCache {
                    ln1,
                    ln1_out,
                    qkv,
                    att,
                    heads,
                    ln2,
                    ln2_out,
                    fc,
                    act,
                });
            }
        }

        let (lnf_out, lnf) = layer_norm(&x, &p.lnf_g, &p.lnf_b);
        let logits = lnf_out.dot(&p.w_head) + &p.b_head;

        let cache = want_cache.then(|| ForwardCache {
            tokens: tokens.to_vec(),
            blocks: block_caches,
            lnf,
            lnf_out,
        });
        (ForwardOutput { logits, trace }, cache)
    }
}

fn inject(x: &mut Array2<f32>, tap: usize, injections: &[Injection], until: Option<usize>) {
    let limit = until.unwrap_or(x.nrows()).min(x.nrows());
    for inj in injections.iter().filter(|inj| inj.layer == tap) {
        for pos in 0..limit {
            for (h, &v) in x.row_mut(pos).iter_mut().zip(&inj.vector) {
                *h += inj.scale * v;
            }
        }
    }
}

pub(crate) fn layer_norm(x: &Array2<f32>, g: &Array1<f32>, b: &Array1<f32>) -> (Array2<f32>, LnCache) {
    let (n, d) = x.dim();
    let mut xhat = Array2::<f32>::zeros((n, d));
    let mut rstd = Array1::<f32>::zeros(n);
    for (i, row) in x.rows().into_iter().enumerate() {
        let mean = row.sum() / d as f32;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for (o, &v) in xhat.row_mut(i).iter_mut().zip(row.iter()) {
            *o = (v - mean) * r;
        }
    }
    let out = &xhat * g + b;
    (out, LnCache { xhat, rstd })
}

/// Causal multi-head self-attention over a packed `[q | k | v]` projection.
fn attention(qkv: &Array2<f32>, n_heads: usize) -> (Array2<f32>, Vec<Array2<f32>>) {
    let n = qkv.nrows();
    let d = qkv.ncols() / 3;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut out = Array2::<f32>::zeros((n, d));
    let mut atts = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let mut att = q.dot(&k.t());
        for (i, mut row) in att.rows_mut().into_iter().enumerate() {
            let max = row
                .iter()
                .take(i + 1)
                .fold(f32::NEG_INFINITY, |m, &s| m.max(s * scale));
            let mut total = 0.0;
            for (j, a) in row.iter_mut().enumerate() {
                if j <= i {
                    *a = (*a * scale - max).exp();
                    total += *a;
                } else {
                    *a = 0.0;
                }
            }
            row.mapv_inplace(|a| a / total);
        }
        out.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&att.dot(&v));
        atts.push(att);
    }
    (out, atts)
}

pub(crate) fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f32) -> f32 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Softmax of one logit row, computed in `f64`.
pub fn softmax_row(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-softmax of one logit row, computed in `f64`.
pub fn log_softmax_row(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let lse = row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|&v| v as f64 - lse).collect()
}
