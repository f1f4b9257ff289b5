// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lexicon scorers for generated text and the lambda sweep harness.
//!
//! Sentiment is a word-valence sum with negation and intensifier handling,
//! squashed by `x / sqrt(x^2 + 15)`. Emotions are keyword hit counts over six
//! classes with add-one smoothing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, segment, Tokenizer};
use crate::data;
use crate::error::{Error, Result};
use crate::generate::{prompt_baseline_generate, steered_generate, GenerationResult, Sampling, SteerRequest};
use crate::model::Model;
use crate::steer_train::job_seed;
use crate::stylevec::{Method, StyleStore};

pub const EMOTIONS: [&str; 6] = ["sadness", "joy", "fear", "anger", "surprise", "disgust"];

/// Identifies the bundled scorers in report headers.
pub const SCORER_NOTE: &str = "scores from bundled lexicon scorers (sentiment: valence lexicon; emotion: keyword lexicon)";

const SQUASH_ALPHA: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SentimentLexicon {
    pub valence: HashMap<String, f64>,
    pub negations: HashSet<String>,
    pub intensifiers: HashMap<String, f64>,
}

fn words(text: &str) -> Vec<String> {
    segment(text).into_iter().map(str::to_lowercase).collect()
}

impl SentimentLexicon {
    /// Parses `kind<TAB>word<TAB>value` lines; `#` starts a comment.
    pub fn parse(content: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| Error::Parse {
                line: idx + 1,
                message: message.to_string(),
            };
            let mut parts = line.split('\t');
            let (Some(kind), Some(word), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected three tab-separated fields"));
            };
            let value: f64 = value.trim().parse().map_err(|_| err("value is not a number"))?;
            let word = word.trim().to_lowercase();
            match kind {
                "valence" if value.is_finite() && (-4.0..=4.0).contains(&value) => {
                    lex.valence.insert(word, value);
                }
                "valence" => return Err(err("valence must lie in [-4, 4]")),
                "negation" => {
                    lex.negations.insert(word);
                }
                "intensifier" if value.is_finite() && value > 0.0 => {
                    lex.intensifiers.insert(word, value);
                }
                "intensifier" => return Err(err("intensifier multiplier must be positive")),
                _ => return Err(err("unknown entry kind")),
            }
        }
        Ok(lex)
    }

    pub fn bundled() -> Result<Self> {
        Self::parse(&data::read("sentiment_lexicon.tsv")?)
    }

    /// Copy with every valence sign flipped.
    pub fn mirrored(&self) -> Self {
        Self {
            valence: self.valence.iter().map(|(w, v)| (w.clone(), -v)).collect(),
            ..self.clone()
        }
    }

    /// Compound score in `[-1, 1]`.
    ///
    /// A negation flips the next valence word and an intensifier scales it.
    /// Punctuation clears any pending modifier.
    pub fn score(&self, text: &str) -> f64 {
        let mut total = 0.0;
        let mut negate = false;
        let mut boost = 1.0;
        for w in words(text) {
            if is_punctuation(&w) {
                negate = false;
                boost = 1.0;
            } else if self.negations.contains(&w) {
                negate = !negate;
            } else if let Some(m) = self.intensifiers.get(&w) {
                boost *= m;
            } else if let Some(v) = self.valence.get(&w) {
                total += v * boost * if negate { -1.0 } else { 1.0 };
                negate = false;
                boost = 1.0;
            }
        }
        total / (total * total + SQUASH_ALPHA).sqrt()
    }
}

pub fn sentiment_score(lex: &SentimentLexicon, text: &str) -> f64 {
    lex.score(text)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmotionLexicon {
    pub words: HashMap<String, Vec<usize>>,
}

impl EmotionLexicon {
    /// Parses `label<TAB>word` lines over the six emotion labels.
    pub fn parse(content: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, word) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected label and word".into(),
            })?;
            let class = EMOTIONS.iter().position(|e| *e == label).ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("unknown emotion '{label}'"),
            })?;
            let entry = lex.words.entry(word.trim().to_lowercase()).or_default();
            if !entry.contains(&class) {
                entry.push(class);
            }
        }
        Ok(lex)
    }

    pub fn bundled() -> Result<Self> {
        Self::parse(&data::read("emotion_lexicon.tsv")?)
    }

    /// Smoothed distribution over [`EMOTIONS`].
    pub fn scores(&self, text: &str) -> BTreeMap<String, f64> {
        let mut hits = [0usize; 6];
        for w in words(text) {
            if let Some(classes) = self.words.get(&w) {
                for &c in classes {
                    hits[c] += 1;
                }
            }
        }
        let total: usize = hits.iter().sum::<usize>() + EMOTIONS.len();
        EMOTIONS
            .iter()
            .zip(hits)
            .map(|(e, h)| (e.to_string(), (h + 1) as f64 / total as f64))
            .collect()
    }
}

pub fn emotion_scores(lex: &EmotionLexicon, text: &str) -> BTreeMap<String, f64> {
    lex.scores(text)
}

/// What a sweep measures on each generated text.
#[derive(Debug, Clone)]
pub enum Scorer {
    Sentiment(SentimentLexicon),
    Emotion(EmotionLexicon, String),
}

impl Scorer {
    pub fn score(&self, text: &str) -> f64 {
        match self {
            Self::Sentiment(lex) => lex.score(text),
            Self::Emotion(lex, label) => lex.scores(text).get(label).copied().unwrap_or(0.0),
        }
    }

    /// Sentiment for the binary styles, the style's own emotion otherwise.
    pub fn for_style(style: &str) -> Result<Self> {
        if EMOTIONS.contains(&style) {
            Ok(Self::Emotion(EmotionLexicon::bundled()?, style.to_string()))
        } else {
            Ok(Self::Sentiment(SentimentLexicon::bundled()?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub id: String,
    pub prompts: Vec<Prompt>,
}

impl PromptSet {
    /// Parses `id<TAB>text` lines.
    pub fn parse(id: &str, content: &str) -> Result<Self> {
        let mut prompts = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (pid, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected id and prompt text".into(),
            })?;
            prompts.push(Prompt {
                id: pid.to_string(),
                text: text.to_string(),
            });
        }
        if prompts.is_empty() {
            return Err(Error::input(format!("prompt set '{id}' is empty")));
        }
        Ok(Self {
            id: id.to_string(),
            prompts,
        })
    }

    /// `factual`, `subjective`, `toy_factual` or `toy_subjective`.
    pub fn bundled(id: &str) -> Result<Self> {
        Self::parse(id, &data::read(&format!("prompts/{id}.tsv"))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse(&id, &fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

pub fn default_grid() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.25).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub method: Method,
    pub layers: Option<Vec<usize>>,
    pub sampling: Sampling,
    pub max_new_tokens: usize,
    pub seed: u64,
    pub baseline: bool,
}

impl SweepConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            grid: default_grid(),
            method: Method::Activation,
            layers: None,
            sampling: Sampling::default(),
            max_new_tokens: 12,
            seed,
            baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `None` for the prompt baseline.
    pub lambda: Option<f64>,
    pub style: String,
    pub prompt_set: String,
    pub mean: f64,
    pub std: f64,
    pub oversteer_rate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub baseline_rows: Vec<SweepRow>,
    /// Every generation, in (lambda, prompt) order.
    pub samples: Vec<SweepSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub lambda: Option<f64>,
    pub prompt_id: String,
    pub text: String,
    pub score: f64,
    pub flagged: bool,
}

fn summarize(lambda: Option<f64>, style: &str, set: &str, results: &[(f64, bool)]) -> SweepRow {
    let n = results.len();
    let mean = results.iter().map(|r| r.0).sum::<f64>() / n as f64;
    let var = results.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / n as f64;
    SweepRow {
        lambda,
        style: style.to_string(),
        prompt_set: set.to_string(),
        mean,
        std: var.sqrt(),
        oversteer_rate: results.iter().filter(|r| r.1).count() as f64 / n as f64,
        n,
    }
}

/// Generates every prompt at every lambda and aggregates the scores.
///
/// Each prompt keeps one seed across the grid, so lambda is the only thing
/// that changes between cells of a column.
pub fn lambda_sweep(
    model: &Model,
    tokenizer: &Tokenizer,
    store: &StyleStore,
    prompts: &PromptSet,
    style: &str,
    scorer: &Scorer,
    cfg: &SweepConfig,
) -> Result<SweepTable> {
    if cfg.grid.is_empty() {
        return Err(Error::config("lambda grid is empty"));
    }
    if cfg.grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::config("lambda grid values must be finite and non-negative"));
    }
    if cfg.grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("lambda grid must be sorted"));
    }
    if prompts.is_empty() {
        return Err(Error::input("prompt set is empty"));
    }
    let cells: Vec<(f64, &Prompt)> = cfg
        .grid
        .iter()
        .flat_map(|&l| prompts.prompts.iter().map(move |p| (l, p)))
        .collect();
    let outputs: Vec<Result<GenerationResult>> = cells
        .par_iter()
        .map(|(lambda, p)| {
            let req = SteerRequest {
                prompt: p.text.clone(),
                style: style.to_string(),
                lambda: *lambda,
                layers: cfg.layers.clone(),
                method: cfg.method,
                sampling: cfg.sampling,
                max_new_tokens: cfg.max_new_tokens,
                seed: job_seed(cfg.seed, &p.id, 0),
                prompt_only: false,
            };
            steered_generate(model, tokenizer, store, &req)
        })
        .collect();

    let mut samples = Vec::with_capacity(cells.len());
    let mut rows = Vec::with_capacity(cfg.grid.len());
    let mut outputs = outputs.into_iter();
    for &lambda in &cfg.grid {
        let mut results = Vec::with_capacity(prompts.len());
        for p in &prompts.prompts {
            let g = outputs.next().expect("one output per cell")?;
            let score = scorer.score(&g.text);
            results.push((score, g.oversteer.flagged));
            samples.push(SweepSample {
                lambda: Some(lambda),
                prompt_id: p.id.clone(),
                text: g.text,
                score,
                flagged: g.oversteer.flagged,
            });
        }
        rows.push(summarize(Some(lambda), style, &prompts.id, &results));
    }

    let mut baseline_rows = Vec::new();
    if cfg.baseline {
        let outputs: Vec<Result<GenerationResult>> = prompts
            .prompts
            .par_iter()
            .map(|p| {
                prompt_baseline_generate(
                    model,
                    tokenizer,
                    store,
                    &p.text,
                    style,
                    cfg.sampling,
                    cfg.max_new_tokens,
                    job_seed(cfg.seed, &p.id, 0),
                )
            })
            .collect();
        let mut results = Vec::with_capacity(prompts.len());
        for (p, g) in prompts.prompts.iter().zip(outputs) {
            let g = g?;
            let score = scorer.score(&g.text);
            results.push((score, g.oversteer.flagged));
            samples.push(SweepSample {
                lambda: None,
                prompt_id: p.id.clone(),
                text: g.text,
                score,
                flagged: g.oversteer.flagged,
            });
        }
        baseline_rows.push(summarize(None, style, &prompts.id, &results));
    }
    Ok(SweepTable {
        rows,
        baseline_rows,
        samples,
    })
}

pub const SWEEP_CSV_HEADER: &str = "lambda,style,prompt_set,mean,std,oversteer_rate,n,baseline_mean";

impl SweepTable {
    pub fn baseline_mean(&self) -> Option<f64> {
        self.baseline_rows.first().map(|r| r.mean)
    }

    pub fn row(&self, lambda: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.lambda == Some(lambda))
    }

    pub fn to_csv(&self) -> String {
        let baseline = self.baseline_mean().map(|b| b.to_string()).unwrap_or_default();
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in self.rows.iter().chain(&self.baseline_rows) {
            let lambda = r.lambda.map(|l| l.to_string()).unwrap_or_else(|| "baseline".into());
            out.push_str(&format!(
                "{lambda},{},{},{},{},{},{},{baseline}\n",
                r.style, r.prompt_set, r.mean, r.std, r.oversteer_rate, r.n
            ));
        }
        out
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in self.rows.iter().chain(&self.baseline_rows) {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        fs::File::create(csv_path)?.write_all(self.to_csv().as_bytes())?;
        fs::write(csv_path.with_extension("jsonl"), self.to_jsonl()?)?;
        Ok(())
    }
}
