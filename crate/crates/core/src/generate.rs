// SPDX-License-Identifier: MIT OR Apache-2.0

//! Steered generation, the prompt-suffix baseline and oversteer detection.

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, segment, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{special, DecodeOptions, DecodePolicy, Injection, Model};
use crate::stylevec::{Method, StyleStore};

/// Token selection without the seed, which travels with the request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    Greedy,
    TopK { k: usize, temperature: f32 },
}

impl Default for Sampling {
    fn default() -> Self {
        Self::TopK {
            k: 8,
            temperature: 1.0,
        }
    }
}

impl Sampling {
    pub fn policy(self, seed: u64) -> DecodePolicy {
        match self {
            Self::Greedy => DecodePolicy::Greedy,
            Self::TopK { k, temperature } => DecodePolicy::TopK { k, temperature, seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerRequest {
    pub prompt: String,
    pub style: String,
    pub lambda: f64,
    /// Defaults to [`default_layers`] for the model depth.
    pub layers: Option<Vec<usize>>,
    pub method: Method,
    pub sampling: Sampling,
    pub max_new_tokens: usize,
    pub seed: u64,
    /// Inject only over the prompt positions.
    #[serde(default)]
    pub prompt_only: bool,
}

impl SteerRequest {
    pub fn new(prompt: impl Into<String>, style: impl Into<String>, lambda: f64, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            style: style.into(),
            lambda,
            layers: None,
            method: Method::Activation,
            sampling: Sampling::default(),
            max_new_tokens: 12,
            seed,
            prompt_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OversteerConfig {
    pub max_repeat_run: usize,
    pub min_distinct_ratio: f64,
}

impl Default for OversteerConfig {
    fn default() -> Self {
        Self {
            max_repeat_run: 4,
            min_distinct_ratio: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OversteerReport {
    pub max_repeat_run: usize,
    pub distinct_ratio: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedInjection {
    pub layer: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    /// Generated ids, including a final EOS when one was emitted.
    pub tokens: Vec<u32>,
    pub injections: Vec<AppliedInjection>,
    pub oversteer: OversteerReport,
    pub baseline: bool,
    /// Prompt text actually fed to the model.
    pub prompt: String,
}

/// Default injection taps: the band of blocks 18 to 20 of a 32-block model,
/// rescaled to `n_layers` as `ceil(18 L / 32) ..= ceil(20 L / 32)`.
pub fn default_layers(n_layers: usize) -> Vec<usize> {
    let lo = (18 * n_layers).div_ceil(32).clamp(1, n_layers);
    let hi = (20 * n_layers).div_ceil(32).clamp(lo, n_layers);
    (lo..=hi).collect()
}

/// Longest run of one repeated word and the share of distinct words.
pub fn detect_oversteer(text: &str) -> OversteerReport {
    detect_oversteer_with(text, &OversteerConfig::default())
}

pub fn detect_oversteer_with(text: &str, cfg: &OversteerConfig) -> OversteerReport {
    let words: Vec<String> = segment(text)
        .into_iter()
        .filter(|p| !is_punctuation(p))
        .map(str::to_lowercase)
        .collect();
    if words.is_empty() {
        return OversteerReport {
            max_repeat_run: 0,
            distinct_ratio: 1.0,
            flagged: false,
        };
    }
    let mut best = 1;
    let mut run = 1;
    for pair in words.windows(2) {
        run = if pair[0] == pair[1] { run + 1 } else { 1 };
        best = best.max(run);
    }
    let mut distinct = words.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let ratio = distinct.len() as f64 / words.len() as f64;
    OversteerReport {
        max_repeat_run: best,
        distinct_ratio: ratio,
        flagged: best >= cfg.max_repeat_run || ratio < cfg.min_distinct_ratio,
    }
}

fn encode_prompt(model: &Model, tokenizer: &Tokenizer, prompt: &str) -> Result<Vec<u32>> {
    let mut tokens = vec![special::BOS];
    tokens.extend(tokenizer.tokenize(prompt));
    if tokens.len() >= model.config().max_seq_len {
        return Err(Error::input(format!(
            "prompt of {} tokens leaves no room in a context of {}",
            tokens.len(),
            model.config().max_seq_len
        )));
    }
    Ok(tokens)
}

fn finish(tokenizer: &Tokenizer, tokens: Vec<u32>, injections: Vec<AppliedInjection>, baseline: bool, prompt: String) -> GenerationResult {
    let text = tokenizer.detokenize(&tokens);
    GenerationResult {
        oversteer: detect_oversteer(&text),
        text,
        tokens,
        injections,
        baseline,
        prompt,
    }
}

/// Injections `lambda * v` for every requested layer of `req.style`.
pub fn build_injections(model: &Model, store: &StyleStore, req: &SteerRequest) -> Result<Vec<Injection>> {
    if !req.lambda.is_finite() || req.lambda < 0.0 {
        return Err(Error::input(format!("lambda must be finite and non-negative, got {}", req.lambda)));
    }
    if !store.has_style(&req.style) {
        return Err(Error::Lookup {
            missing: format!("style '{}'", req.style),
            available: store.describe(),
        });
    }
    let layers = req.layers.clone().unwrap_or_else(|| default_layers(model.config().n_layers));
    if layers.is_empty() {
        return Err(Error::input("no injection layers given"));
    }
    layers
        .iter()
        .map(|&layer| {
            model.config().check_layer(layer)?;
            let v = store.get(&req.style, layer, req.method)?;
            Ok(Injection::new(layer, v.vector.clone(), req.lambda as f32))
        })
        .collect()
}

/// Decodes `req.prompt` with `lambda * v_style` added at each requested tap.
pub fn steered_generate(model: &Model, tokenizer: &Tokenizer, store: &StyleStore, req: &SteerRequest) -> Result<GenerationResult> {
    let injections = build_injections(model, store, req)?;
    let prompt = encode_prompt(model, tokenizer, &req.prompt)?;
    let tokens = model.decode_with(
        &prompt,
        &injections,
        req.max_new_tokens,
        req.sampling.policy(req.seed),
        DecodeOptions {
            prompt_only_injection: req.prompt_only,
        },
    )?;
    let applied = injections
        .iter()
        .map(|i| AppliedInjection {
            layer: i.layer,
            scale: req.lambda,
        })
        .collect();
    Ok(finish(tokenizer, tokens, applied, false, req.prompt.clone()))
}

/// Decodes without any injection.
pub fn unsteered_generate(
    model: &Model,
    tokenizer: &Tokenizer,
    prompt: &str,
    sampling: Sampling,
    max_new_tokens: usize,
    seed: u64,
) -> Result<GenerationResult> {
    let ids = encode_prompt(model, tokenizer, prompt)?;
    let tokens = model.decode(&ids, &[], max_new_tokens, sampling.policy(seed))?;
    Ok(finish(tokenizer, tokens, Vec::new(), false, prompt.to_string()))
}

/// The prompt with the instruction suffix for `adjective`.
pub fn baseline_prompt(prompt: &str, adjective: &str) -> String {
    format!("{prompt} Write the answer in a {adjective} manner.")
}

/// Asks for the style in words instead of injecting a vector.
pub fn prompt_baseline_generate(
    model: &Model,
    tokenizer: &Tokenizer,
    store: &StyleStore,
    prompt: &str,
    style: &str,
    sampling: Sampling,
    max_new_tokens: usize,
    seed: u64,
) -> Result<GenerationResult> {
    let adjective = store
        .adjective(style)
        .ok_or_else(|| Error::config(format!("style '{style}' has no registered adjective")))?;
    let full = baseline_prompt(prompt, adjective);
    let ids = encode_prompt(model, tokenizer, &full)?;
    let tokens = model.decode(&ids, &[], max_new_tokens, sampling.policy(seed))?;
    Ok(finish(tokenizer, tokens, Vec::new(), true, full))
}
