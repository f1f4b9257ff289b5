// SPDX-License-Identifier: MIT OR Apache-2.0

//! Parameter tensors and their deterministic initialization.
//!
//! Tensor order (also the checkpoint order):
//!
//! 1. `tok_emb`  `[vocab, d]`
//! 2. `pos_emb`  `[max_seq_len, d]`
//! 3. per block: `ln1_g [d]`, `ln1_b [d]`, `w_qkv [d, 3d]`, `b_qkv [3d]`,
//!    `w_o [d, d]`, `b_o [d]`, `ln2_g [d]`, `ln2_b [d]`, `w_fc [d, 4d]`,
//!    `b_fc [4d]`, `w_proj [4d, d]`, `b_proj [d]`
//! 4. `lnf_g [d]`, `lnf_b [d]`, `w_head [d, vocab]`, `b_head [vocab]`
//!
//! Initialization draws from a ChaCha8 stream seeded with `config.seed`, in
//! the order above: every weight matrix and both embeddings are uniform in
//! `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` (embeddings use `fan_in = d`), norm
//! gains are 1 and all biases are 0.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Array1<f32>,
    pub ln1_b: Array1<f32>,
    pub w_qkv: Array2<f32>,
    pub b_qkv: Array1<f32>,
    pub w_o: Array2<f32>,
    pub b_o: Array1<f32>,
    pub ln2_g: Array1<f32>,
    pub ln2_b: Array1<f32>,
    pub w_fc: Array2<f32>,
    pub b_fc: Array1<f32>,
    pub w_proj: Array2<f32>,
    pub b_proj: Array1<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Array2<f32>,
    pub pos_emb: Array2<f32>,
    pub blocks: Vec<BlockParams>,
    pub lnf_g: Array1<f32>,
    pub lnf_b: Array1<f32>,
    pub w_head: Array2<f32>,
    pub b_head: Array1<f32>,
}

impl BlockParams {
    fn zeros(d: usize) -> Self {
        let ff = 4 * d;
        Self {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w_qkv: Array2::zeros((d, 3 * d)),
            b_qkv: Array1::zeros(3 * d),
            w_o: Array2::zeros((d, d)),
            b_o: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w_fc: Array2::zeros((d, ff)),
            b_fc: Array1::zeros(ff),
            w_proj: Array2::zeros((ff, d)),
            b_proj: Array1::zeros(d),
        }
    }

    fn slices(&self) -> [&[f32]; 12] {
        [
            flat(&self.ln1_g),
            flat(&self.ln1_b),
            flat2(&self.w_qkv),
            flat(&self.b_qkv),
            flat2(&self.w_o),
            flat(&self.b_o),
            flat(&self.ln2_g),
            flat(&self.ln2_b),
            flat2(&self.w_fc),
            flat(&self.b_fc),
            flat2(&self.w_proj),
            flat(&self.b_proj),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f32]; 12] {
        [
            flat_mut(&mut self.ln1_g),
            flat_mut(&mut self.ln1_b),
            flat2_mut(&mut self.w_qkv),
            flat_mut(&mut self.b_qkv),
            flat2_mut(&mut self.w_o),
            flat_mut(&mut self.b_o),
            flat_mut(&mut self.ln2_g),
            flat_mut(&mut self.ln2_b),
            flat2_mut(&mut self.w_fc),
            flat_mut(&mut self.b_fc),
            flat2_mut(&mut self.w_proj),
            flat_mut(&mut self.b_proj),
        ]
    }
}

impl Params {
    /// All-zero tensors with the shapes implied by `config` (gradient buffers).
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        Self {
            tok_emb: Array2::zeros((config.vocab_size, d)),
            pos_emb: Array2::zeros((config.max_seq_len, d)),
            blocks: (0..config.n_layers).map(|_| BlockParams::zeros(d)).collect(),
            lnf_g: Array1::zeros(d),
            lnf_b: Array1::zeros(d),
            w_head: Array2::zeros((d, config.vocab_size)),
            b_head: Array1::zeros(config.vocab_size),
        }
    }

    pub(crate) fn init(config: &ModelConfig) -> Self {
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;

        fill_uniform(&mut rng, flat2_mut(&mut params.tok_emb), d);
        fill_uniform(&mut rng, flat2_mut(&mut params.pos_emb), d);
        for block in &mut params.blocks {
            block.ln1_g.fill(1.0);
            block.ln2_g.fill(1.0);
            fill_uniform(&mut rng, flat2_mut(&mut block.w_qkv), d);
            fill_uniform(&mut rng, flat2_mut(&mut block.w_o), d);
            fill_uniform(&mut rng, flat2_mut(&mut block.w_fc), d);
            fill_uniform(&mut rng, flat2_mut(&mut block.w_proj), 4 * d);
        }
        params.lnf_g.fill(1.0);
        fill_uniform(&mut rng, flat2_mut(&mut params.w_head), d);
        params
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<&[f32]> {
        let mut out = vec![flat2(&self.tok_emb), flat2(&self.pos_emb)];
        for block in &self.blocks {
            out.extend(block.slices());
        }
        out.extend([
            flat(&self.lnf_g),
            flat(&self.lnf_b),
            flat2(&self.w_head),
            flat(&self.b_head),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = vec![flat2_mut(&mut self.tok_emb), flat2_mut(&mut self.pos_emb)];
        for block in &mut self.blocks {
            out.extend(block.slices_mut());
        }
        out.extend([
            flat_mut(&mut self.lnf_g),
            flat_mut(&mut self.lnf_b),
            flat2_mut(&mut self.w_head),
            flat_mut(&mut self.b_head),
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub(crate) fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

fn fill_uniform(rng: &mut ChaCha8Rng, out: &mut [f32], fan_in: usize) {
    let bound = 1.0 / (fan_in as f32).sqrt();
    for v in out {
        *v = rng.random_range(-bound..bound);
    }
}

fn flat(a: &Array1<f32>) -> &[f32] {
    a.as_slice().expect("standard layout")
}

fn flat2(a: &Array2<f32>) -> &[f32] {
    a.as_slice().expect("standard layout")
}

fn flat_mut(a: &mut Array1<f32>) -> &mut [f32] {
    a.as_slice_mut().expect("standard layout")
}

fn flat2_mut(a: &mut Array2<f32>) -> &mut [f32] {
    a.as_slice_mut().expect("standard layout")
}
