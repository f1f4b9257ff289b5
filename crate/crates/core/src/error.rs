// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its invariants.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied input is out of contract (bad token id, empty prompt, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Vector or tensor length mismatch.
    #[error("dimension error: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A layer index outside the model's tap range.
    #[error("layer {layer} out of range (taps 0..={max})")]
    LayerRange { layer: usize, max: usize },

    /// Parameters were about to be mutated on a frozen model.
    #[error("model is frozen; parameters are read-only")]
    Frozen,

    /// Malformed record in a line-delimited file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Corpus ended up with no samples.
    #[error("corpus is empty")]
    EmptyCorpus,

    /// Binary container is corrupt, truncated or has the wrong version.
    #[error("format error: {0}")]
    Format(String),

    /// Style vector aggregation had nothing on one side.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A style/layer/method combination is not present.
    #[error("no style vector for {missing}; available: {available}")]
    Lookup { missing: String, available: String },

    /// Metric is undefined for the given labels (e.g. AUC with one class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Loss became non-finite during optimization.
    #[error("numerical divergence after {epochs} epochs (last finite loss {last_loss})")]
    Divergence {
        epochs: usize,
        last_loss: f64,
        last_vector: Vec<f32>,
    },

    /// A required input file does not exist.
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    /// True for errors that stem from numerical failure rather than bad data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::Divergence { .. })
    }
}
