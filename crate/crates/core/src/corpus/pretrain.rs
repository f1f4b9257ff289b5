// SPDX-License-Identifier: MIT OR Apache-2.0

//! Next-token pre-training of the toy model on corpus text.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Tokenizer;
use crate::error::{Error, Result};
use crate::model::{special, Model, Params};
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 3e-3,
            batch_size: 16,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub sequences: usize,
    /// Mean per-token cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains every parameter with Adam on `<bos> text <eos>` sequences.
///
/// Per-sequence gradients are computed in parallel and reduced in batch
/// order, so the result does not depend on the thread count.
pub fn pretrain(model: &mut Model, tokenizer: &Tokenizer, texts: &[String], cfg: &PretrainConfig) -> Result<PretrainReport> {
    if model.is_frozen() {
        return Err(Error::Frozen);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::config("epochs and batch_size must be positive"));
    }
    if !(cfg.weight_decay >= 0.0 && cfg.weight_decay.is_finite()) {
        return Err(Error::config("weight_decay must be finite and non-negative"));
    }
    if tokenizer.len() != model.config().vocab_size {
        return Err(Error::config(format!(
            "tokenizer has {} entries but the model vocabulary is {}",
            tokenizer.len(),
            model.config().vocab_size
        )));
    }
    let max_len = model.config().max_seq_len + 1;
    let sequences: Vec<Vec<u32>> = texts
        .iter()
        .map(|t| {
            let mut seq = vec![special::BOS];
            seq.extend(tokenizer.tokenize(t));
            seq.push(special::EOS);
            seq.truncate(max_len);
            seq
        })
        .filter(|s| s.len() >= 2)
        .collect();
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_params = model.params().num_parameters();
    let mut adam = Adam::new(cfg.learning_rate, n_params);
    adam.weight_decay = cfg.weight_decay;
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let frozen_view: &Model = model;
            let per_seq: Vec<(f64, usize, Params)> = batch
                .par_iter()
                .map(|&i| {
                    let seq = &sequences[i];
                    let (input, targets) = (&seq[..seq.len() - 1], &seq[1..]);
                    let (out, cache) = frozen_view.forward_cached(input, &[]).expect("validated sequence");
                    let (loss, dlogits) = crate::model::cross_entropy_sum(&out.logits, targets);
                    let mut grads = Params::zeros(frozen_view.config());
                    frozen_view.backward(&cache, &dlogits, 0, Some(&mut grads));
                    (loss, targets.len(), grads)
                })
                .collect();

            let tokens: usize = per_seq.iter().map(|(_, n, _)| n).sum();
            let mut total = Params::zeros(model.config());
            total.fill_zero();
            for (loss, _, grads) in &per_seq {
                epoch_loss += loss;
                for (acc, g) in total.tensors_mut().into_iter().zip(grads.tensors()) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            epoch_tokens += tokens;
            let scale = 1.0 / tokens as f32;
            for t in total.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= scale);
            }
            let params = model.params_mut()?;
            adam.step_chunks(params.tensors_mut().into_iter().zip(total.tensors()));
        }
        let mean = epoch_loss / epoch_tokens as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence {
                epochs: epoch_losses.len(),
                last_loss: epoch_losses.last().copied().unwrap_or(f64::NAN),
                last_vector: Vec::new(),
            });
        }
        log::debug!("pretrain epoch {}: loss {mean:.4}", epoch_losses.len() + 1);
        epoch_losses.push(mean);
    }
    Ok(PretrainReport {
        sequences: sequences.len(),
        epoch_losses,
    })
}
