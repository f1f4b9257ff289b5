// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal pre-norm decoder-only transformer with residual-stream taps and
//! additive injection hooks.
//!
//! Taps are numbered `0..=n_layers`: tap 0 is the embedding output (token plus
//! position), tap `i` is the residual stream after block `i`. Injections are
//! added at a tap before the next block reads it, and recorded activations
//! are post-injection.

mod backward;
mod checkpoint;
mod decode;
mod forward;
mod params;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use decode::{argmax, DecodeOptions, DecodePolicy};
pub use forward::{log_softmax_row, softmax_row, ForwardOutput};
pub use params::{BlockParams, Params};

pub(crate) use backward::cross_entropy_sum;

/// Reserved token ids shared by the model and the tokenizer.
pub mod special {
    pub const PAD: u32 = 0;
    pub const BOS: u32 = 1;
    pub const EOS: u32 = 2;
    pub const UNK: u32 = 3;
    pub const COUNT: usize = 4;

    pub fn is_special(id: u32) -> bool {
        (id as usize) < COUNT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Geometry of the 7B reference model: 32 blocks, 33 taps, width 4096.
    pub fn reference() -> Self {
        Self {
            n_layers: 32,
            d_model: 4096,
            n_heads: 32,
            vocab_size: 32000,
            max_seq_len: 2048,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::config("n_layers must be at least 1"));
        }
        if self.d_model == 0 || self.n_heads == 0 {
            return Err(Error::config("d_model and n_heads must be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < special::COUNT {
            return Err(Error::config(format!(
                "vocab_size {} cannot hold the {} special tokens",
                self.vocab_size,
                special::COUNT
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::config("max_seq_len must be positive"));
        }
        Ok(())
    }

    /// Number of residual-stream taps, `n_layers + 1`.
    pub fn n_taps(&self) -> usize {
        self.n_layers + 1
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer > self.n_layers {
            Err(Error::LayerRange {
                layer,
                max: self.n_layers,
            })
        } else {
            Ok(())
        }
    }
}

/// Additive intervention `scale * vector` at one residual-stream tap.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub layer: usize,
    pub vector: Vec<f32>,
    pub scale: f32,
}

impl Injection {
    pub fn new(layer: usize, vector: Vec<f32>, scale: f32) -> Self {
        Self {
            layer,
            vector,
            scale,
        }
    }
}

/// How per-position activations collapse into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Last,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "last" => Ok(Self::Last),
            other => Err(Error::config(format!("unknown pooling '{other}'"))),
        }
    }
}

/// Post-injection residual-stream activations, one `[positions, d_model]`
/// matrix per recorded tap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationTrace {
    pub per_layer: BTreeMap<usize, Array2<f32>>,
}

impl ActivationTrace {
    /// Pools the positions `from..` of every recorded layer.
    ///
    /// Sums run in `f64`. A trace whose window is empty falls back to the
    /// last position.
    pub fn pooled(&self, pooling: Pooling, from: usize) -> BTreeMap<usize, Vec<f32>> {
        self.per_layer
            .iter()
            .map(|(&layer, acts)| (layer, pool_rows(acts, pooling, from)))
            .collect()
    }
}

pub(crate) fn pool_rows(acts: &Array2<f32>, pooling: Pooling, from: usize) -> Vec<f32> {
    let rows = acts.nrows();
    let start = if from < rows { from } else { rows - 1 };
    match pooling {
        Pooling::Last => acts.row(rows - 1).to_vec(),
        Pooling::Mean => {
            let mut sum = vec![0f64; acts.ncols()];
            for row in acts.rows().into_iter().skip(start) {
                for (s, &v) in sum.iter_mut().zip(row.iter()) {
                    *s += v as f64;
                }
            }
            let n = (rows - start) as f64;
            sum.into_iter().map(|s| (s / n) as f32).collect()
        }
    }
}

/// Frozen-after-construction transformer LM.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Params,
    frozen: bool,
}

impl Model {
    /// Deterministic initialization from `config.seed` (see [`Params`] for the scheme).
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: Params::init(&config),
            config,
            frozen: false,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Params, frozen: bool) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params,
            frozen,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable parameter access; refused once the model is frozen.
    pub fn params_mut(&mut self) -> Result<&mut Params> {
        if self.frozen {
            Err(Error::Frozen)
        } else {
            Ok(&mut self.params)
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// SHA-256 over all parameter bits in checkpoint order, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for tensor in self.params.tensors() {
            for v in tensor {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::input("token sequence is empty"));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::input(format!(
                "sequence of {} tokens exceeds max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(&bad) = tokens
            .iter()
            .find(|&&t| t as usize >= self.config.vocab_size)
        {
            return Err(Error::input(format!(
                "token id {bad} out of vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn check_injections(&self, injections: &[Injection]) -> Result<()> {
        for inj in injections {
            self.config.check_layer(inj.layer)?;
            if inj.vector.len() != self.config.d_model {
                return Err(Error::Dimension {
                    expected: self.config.d_model,
                    got: inj.vector.len(),
                });
            }
        }
        Ok(())
    }
}
