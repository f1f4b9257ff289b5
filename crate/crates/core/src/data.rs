// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bundled lexicons, prompt sets and mini-corpora.
//!
//! Files are compiled into the binary. Setting `STYLESTEER_DATA_DIR` makes
//! same-named files in that directory take precedence.

use std::fs;
use std::path::PathBuf;

use crate::error::{Error, Result};

pub const DATA_DIR_ENV: &str = "STYLESTEER_DATA_DIR";

const FILES: &[(&str, &str)] = &[
    ("sentiment_lexicon.tsv", include_str!("../data/sentiment_lexicon.tsv")),
    ("emotion_lexicon.tsv", include_str!("../data/emotion_lexicon.tsv")),
    ("facts.jsonl", include_str!("../data/facts.jsonl")),
    ("prompts/factual.tsv", include_str!("../data/prompts/factual.tsv")),
    ("prompts/subjective.tsv", include_str!("../data/prompts/subjective.tsv")),
    ("prompts/toy_factual.tsv", include_str!("../data/prompts/toy_factual.tsv")),
    ("prompts/toy_subjective.tsv", include_str!("../data/prompts/toy_subjective.tsv")),
    ("corpora/sentiment.jsonl", include_str!("../data/corpora/sentiment.jsonl")),
    ("corpora/emotions.jsonl", include_str!("../data/corpora/emotions.jsonl")),
    ("corpora/register.jsonl", include_str!("../data/corpora/register.jsonl")),
];

/// Names of every bundled file.
pub fn names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(n, _)| *n)
}

/// Contents of a bundled file, preferring the override directory.
pub fn read(name: &str) -> Result<String> {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        let path = PathBuf::from(dir).join(name);
        if path.exists() {
            return Ok(fs::read_to_string(path)?);
        }
    }
    FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| c.to_string())
        .ok_or_else(|| Error::MissingFile(PathBuf::from(name)))
}
