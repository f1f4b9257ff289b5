// SPDX-License-Identifier: MIT OR Apache-2.0

//! Labeled style corpora: loading, filtering, synthesis, tokenization and
//! pre-training of the toy model on corpus text.

mod pretrain;
mod synth;
mod tokenizer;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pretrain::{pretrain, PretrainConfig, PretrainReport};
pub use synth::{synth_corpus, SynthSpec};
pub use tokenizer::{is_punctuation, segment, Tokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyledSample {
    pub id: String,
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StyledCorpus {
    pub name: String,
    pub categories: Vec<String>,
    pub samples: Vec<StyledSample>,
}

#[derive(Deserialize)]
struct Record {
    text: Option<String>,
    label: Option<String>,
    id: Option<String>,
    categories: Option<Vec<String>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    text: &'a str,
    label: &'a str,
    id: &'a str,
}

impl StyledCorpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples_with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a StyledSample> + 'a {
        self.samples.iter().filter(move |s| s.label == label)
    }

    pub fn count(&self, label: &str) -> usize {
        self.samples_with_label(label).count()
    }

    /// Keeps samples of at most `max_chars` characters.
    pub fn filter_max_chars(&self, max_chars: usize) -> StyledCorpus {
        StyledCorpus {
            name: self.name.clone(),
            categories: self.categories.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| s.text.chars().count() <= max_chars)
                .cloned()
                .collect(),
        }
    }

    /// Writes the line-delimited form, header first.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &serde_json::json!({ "categories": self.categories }))?;
        out.push(b'\n');
        for s in &self.samples {
            serde_json::to_writer(
                &mut out,
                &RecordOut {
                    text: &s.text,
                    label: &s.label,
                    id: &s.id,
                },
            )?;
            out.push(b'\n');
        }
        fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }
}

/// Reads a corpus file, dropping samples longer than `max_chars` characters
/// (when given) and exact `(text, label)` duplicates.
pub fn load_corpus(path: impl AsRef<Path>, max_chars: Option<usize>) -> Result<StyledCorpus> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    parse_corpus(&fs::read_to_string(path)?, &name, max_chars)
}

/// Parses the line-delimited corpus format from a string.
pub fn parse_corpus(content: &str, name: &str, max_chars: Option<usize>) -> Result<StyledCorpus> {
    let mut declared: Option<Vec<String>> = None;
    let mut observed: Vec<String> = Vec::new();
    let mut samples = Vec::new();
    let mut seen_pairs = HashSet::new();
    let mut seen_ids = HashSet::new();
    let mut first_record = true;

    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let record: Record = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(categories) = record.categories {
            if !first_record {
                return Err(parse_err("category header must be the first record".into()));
            }
            if categories.is_empty() {
                return Err(parse_err("category header is empty".into()));
            }
            declared = Some(categories);
            first_record = false;
            continue;
        }
        first_record = false;
        let text = record.text.ok_or_else(|| parse_err("missing field `text`".into()))?;
        let label = record.label.ok_or_else(|| parse_err("missing field `label`".into()))?;
        if text.is_empty() {
            return Err(parse_err("empty text".into()));
        }
        if let Some(cats) = &declared {
            if !cats.contains(&label) {
                return Err(parse_err(format!("label '{label}' not in declared categories")));
            }
        }
        if max_chars.is_some_and(|m| text.chars().count() > m) {
            continue;
        }
        if !seen_pairs.insert((text.clone(), label.clone())) {
            continue;
        }
        let id = record.id.unwrap_or_else(|| format!("{name}-{lineno}"));
        if !seen_ids.insert(id.clone()) {
            return Err(parse_err(format!("duplicate id '{id}'")));
        }
        if !observed.contains(&label) {
            observed.push(label.clone());
        }
        samples.push(StyledSample { id, text, label });
    }

    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(StyledCorpus {
        name: name.to_string(),
        categories: declared.unwrap_or(observed),
        samples,
    })
}
