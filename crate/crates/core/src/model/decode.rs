// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::softmax_row;
use super::{special, Injection, Model};
use crate::error::{Error, Result};

/// Token selection rule for autoregressive decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodePolicy {
    Greedy,
    TopK { k: usize, temperature: f32, seed: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Restrict injections to the prompt positions instead of every position.
    pub prompt_only_injection: bool,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Autoregressive decoding from `prompt`, re-running the full forward pass
    /// with the injections at every step.
    ///
    /// Returns the new tokens only. Generation stops after emitting EOS (which
    /// is included), after `max_new_tokens`, or when the context is full.
    pub fn decode(
        &self,
        prompt: &[u32],
        injections: &[Injection],
        max_new_tokens: usize,
        policy: DecodePolicy,
    ) -> Result<Vec<u32>> {
        self.decode_with(prompt, injections, max_new_tokens, policy, DecodeOptions::default())
    }

    pub fn decode_with(
        &self,
        prompt: &[u32],
        injections: &[Injection],
        max_new_tokens: usize,
        policy: DecodePolicy,
        options: DecodeOptions,
    ) -> Result<Vec<u32>> {
        if max_new_tokens == 0 {
            return Err(Error::input("max_new_tokens must be positive"));
        }
        if prompt.is_empty() {
            return Err(Error::input("prompt must contain at least one token"));
        }
        if prompt.len() >= self.config.max_seq_len {
            return Err(Error::input(format!(
                "prompt of {} tokens leaves no room in a context of {}",
                prompt.len(),
                self.config.max_seq_len
            )));
        }
        let mut sampler = match policy {
            DecodePolicy::Greedy => None,
            DecodePolicy::TopK { k, temperature, seed } => {
                if k == 0 || !(temperature > 0.0) || !temperature.is_finite() {
                    return Err(Error::input("top-k needs k >= 1 and a positive finite temperature"));
                }
                Some((k, temperature, ChaCha8Rng::seed_from_u64(seed)))
            }
        };
        let limit = options.prompt_only_injection.then_some(prompt.len());

        let mut context = prompt.to_vec();
        let mut generated = Vec::new();
        while generated.len() < max_new_tokens && context.len() < self.config.max_seq_len {
            let out = self.forward_scoped(&context, injections, limit, &[])?;
            let last = out.logits.row(context.len() - 1);
            let row = last.as_slice().expect("contiguous row");
            let next = match sampler.as_mut() {
                None => argmax(row) as u32,
                Some((k, temperature, rng)) => sample_top_k(row, *k, *temperature, rng),
            };
            context.push(next);
            generated.push(next);
            if next == special::EOS {
                break;
            }
        }
        Ok(generated)
    }
}

fn sample_top_k(row: &[f32], k: usize, temperature: f32, rng: &mut ChaCha8Rng) -> u32 {
    let mut order: Vec<usize> = (0..row.len()).collect();
    // Stable sort keeps lower ids first among equal logits.
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    order.truncate(k.min(row.len()));
    let scaled: Vec<f32> = order.iter().map(|&i| row[i] / temperature).collect();
    let probs = softmax_row(&scaled);
    let dist = WeightedIndex::new(&probs).expect("softmax weights are positive");
    order[dist.sample(rng)] as u32
}
