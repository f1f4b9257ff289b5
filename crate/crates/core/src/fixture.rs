// SPDX-License-Identifier: MIT OR Apache-2.0

//! The bundled toy setting: a small model pre-trained on a synthetic
//! positive/negative corpus plus a handful of memorized facts.
//!
//! Subjective toy prompts are bare topic words, which the corpus continues
//! with sentiment words of either class. Factual toy prompts are facts minus
//! their last word, which the model learns to complete and then stop.

use serde::{Deserialize, Serialize};

use crate::corpus::{parse_corpus, pretrain, synth_corpus, PretrainConfig, PretrainReport, StyledCorpus, SynthSpec, Tokenizer};
use crate::data;
use crate::error::Result;
use crate::evaluate::PromptSet;
use crate::generate::baseline_prompt;
use crate::model::{Model, ModelConfig};
use crate::stylevec::default_adjective;

pub const POSITIVE_WORDS: [&str; 20] = [
    "great", "lovely", "wonderful", "excellent", "amazing", "delightful", "superb", "fantastic", "pleasant",
    "perfect", "brilliant", "charming", "beautiful", "awesome", "enjoyable", "splendid", "gorgeous", "glorious",
    "cheerful", "friendly",
];

pub const NEGATIVE_WORDS: [&str; 20] = [
    "awful", "terrible", "horrible", "dreadful", "disappointing", "bland", "lousy", "rude", "boring", "nasty",
    "poor", "bad", "ugly", "mediocre", "unpleasant", "pathetic", "vile", "wretched", "miserable", "gross",
];

/// Neutral topic words that open every sample. The first 20 are the toy
/// subjective prompts.
pub const TOPIC_WORDS: [&str; 100] = [
    "food", "movie", "service", "staff", "hotel", "room", "music", "book", "weather", "trip", "show", "game",
    "concert", "pizza", "coffee", "headphones", "vacation", "city", "class", "team", "bread", "cake", "soup",
    "salad", "tea", "juice", "bus", "train", "plane", "car", "bike", "park", "beach", "garden", "museum",
    "library", "theater", "stadium", "airport", "station", "kitchen", "bakery", "cafe", "bar", "restaurant",
    "menu", "dessert", "breakfast", "lunch", "dinner", "burger", "pasta", "sushi", "steak", "noodles", "sandwich",
    "laptop", "phone", "camera", "tablet", "keyboard", "printer", "speaker", "television", "radio", "podcast",
    "album", "song", "guitar", "piano", "novel", "magazine", "newspaper", "lecture", "teacher", "course", "exam",
    "homework", "campus", "office", "meeting", "manager", "boss", "coworker", "shop", "store", "mall", "market",
    "price", "delivery", "package", "order", "website", "app", "update", "driver", "taxi", "ride", "flight",
    "cruise",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub max_seq_len: usize,
    pub n_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Topic words every sample starts with at least.
    pub min_topics: usize,
    /// How many of [`TOPIC_WORDS`] the corpus uses.
    pub n_topics: usize,
    /// Copies of each fact in the pre-training mix.
    pub fact_repeats: usize,
    /// Out-degree of the class word graphs; `None` draws words independently.
    pub successors: Option<usize>,
    /// Chance that a walk step leaves the word graph.
    pub jump: f64,
    pub pretrain: PretrainConfig,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            n_layers: 6,
            d_model: 64,
            n_heads: 4,
            max_seq_len: 24,
            n_per_class: 200,
            min_len: 4,
            max_len: 6,
            min_topics: 0,
            n_topics: 20,
            fact_repeats: 4,
            successors: Some(1),
            jump: 0.05,
            pretrain: PretrainConfig {
                epochs: 12,
                learning_rate: 3e-3,
                batch_size: 16,
                weight_decay: 0.0,
                seed: 0,
            },
            seed: 0,
        }
    }
}

pub struct Fixture {
    pub model: Model,
    pub tokenizer: Tokenizer,
    pub corpus: StyledCorpus,
    pub facts: StyledCorpus,
    pub report: PretrainReport,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn sentiment_spec(cfg: &FixtureConfig) -> SynthSpec {
    SynthSpec {
        name: "toy".into(),
        categories: words(&["positive", "negative"]),
        lexicons: vec![words(&POSITIVE_WORDS), words(&NEGATIVE_WORDS)],
        neutral: words(&TOPIC_WORDS[..cfg.n_topics.clamp(1, TOPIC_WORDS.len())]),
        n_per_class: cfg.n_per_class,
        min_len: cfg.min_len,
        max_len: cfg.max_len,
        max_neutral_fraction: 0.2,
        min_neutral: cfg.min_topics,
        allow_overlap: false,
        successors: cfg.successors,
        jump: cfg.jump,
    }
}

/// The fact corpus shipped with the crate.
pub fn facts() -> Result<StyledCorpus> {
    parse_corpus(&data::read("facts.jsonl")?, "facts", None)
}

/// Vocabulary covering the corpus, the facts, the toy prompts and the
/// baseline instruction for both styles.
pub fn fixture_tokenizer(corpus: &StyledCorpus, facts: &StyledCorpus) -> Result<Tokenizer> {
    let mut texts: Vec<String> = corpus.samples.iter().chain(&facts.samples).map(|s| s.text.clone()).collect();
    for set in [subjective_prompts()?, factual_prompts()?] {
        texts.extend(set.prompts.into_iter().map(|p| p.text));
    }
    for style in ["positive", "negative"] {
        texts.push(baseline_prompt("", default_adjective(style).expect("registered")));
    }
    Ok(Tokenizer::from_texts(texts.iter().map(String::as_str)))
}

/// Synthesizes the corpus, builds the vocabulary and pre-trains a frozen model.
pub fn build(cfg: &FixtureConfig) -> Result<Fixture> {
    build_from_corpus(cfg, synth_corpus(&sentiment_spec(cfg), cfg.seed)?)
}

/// Pre-trains on `corpus` plus the facts instead of the synthetic corpus.
pub fn build_from_corpus(cfg: &FixtureConfig, corpus: StyledCorpus) -> Result<Fixture> {
    let facts = facts()?;
    let tokenizer = fixture_tokenizer(&corpus, &facts)?;
    let mut model = Model::init(ModelConfig {
        n_layers: cfg.n_layers,
        d_model: cfg.d_model,
        n_heads: cfg.n_heads,
        vocab_size: tokenizer.len(),
        max_seq_len: cfg.max_seq_len,
        seed: cfg.seed,
    })?;
    let mut texts: Vec<String> = corpus.samples.iter().map(|s| s.text.clone()).collect();
    for _ in 0..cfg.fact_repeats {
        texts.extend(facts.samples.iter().map(|s| s.text.clone()));
    }
    let pcfg = PretrainConfig {
        seed: cfg.seed,
        ..cfg.pretrain.clone()
    };
    let report = pretrain(&mut model, &tokenizer, &texts, &pcfg)?;
    model.freeze();
    Ok(Fixture {
        model,
        tokenizer,
        corpus,
        facts,
        report,
    })
}

pub fn subjective_prompts() -> Result<PromptSet> {
    PromptSet::bundled("toy_subjective")
}

pub fn factual_prompts() -> Result<PromptSet> {
    PromptSet::bundled("toy_factual")
}
