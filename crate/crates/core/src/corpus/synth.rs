// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{StyledCorpus, StyledSample};
use crate::error::{Error, Result};

/// Recipe for a class-balanced synthetic corpus.
///
/// Each sample is an optional prefix of neutral words (at most
/// `max_neutral_fraction` of its length) followed by words drawn from its
/// class lexicon, with no word repeated back to back.
///
/// With `successors` set to k, each lexicon is shuffled into a seeded cyclic
/// order and a word may only be followed by the k words after it in that
/// order, giving the text a learnable word order. Every neutral word then
/// also gets one fixed lead word per class that must follow it, with no two
/// neutral words sharing a lead unless the lexicon is too small. With
/// probability `jump` a step leaves the graph and draws any other word of the
/// class instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub categories: Vec<String>,
    /// One lexicon per category, in the same order.
    pub lexicons: Vec<Vec<String>>,
    pub neutral: Vec<String>,
    pub n_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    #[serde(default = "default_neutral_fraction")]
    pub max_neutral_fraction: f64,
    /// Neutral words every sample starts with at least.
    #[serde(default)]
    pub min_neutral: usize,
    /// Lexicons may share words only when this is set.
    #[serde(default)]
    pub allow_overlap: bool,
    #[serde(default)]
    pub successors: Option<usize>,
    #[serde(default)]
    pub jump: f64,
}

fn default_neutral_fraction() -> f64 {
    0.2
}

fn max_neutral(len: usize, fraction: f64) -> usize {
    (len as f64 * fraction).floor() as usize
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() || self.categories.len() != self.lexicons.len() {
            return Err(Error::config("need one lexicon per category"));
        }
        if self.lexicons.iter().any(Vec::is_empty) {
            return Err(Error::config("empty class lexicon"));
        }
        if self.n_per_class == 0 {
            return Err(Error::config("n_per_class must be at least 1"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::config("length range must satisfy 1 <= min_len <= max_len"));
        }
        if let Some(k) = self.successors {
            if k == 0 || self.lexicons.iter().any(|lex| lex.len() <= k) {
                return Err(Error::config("successors must be positive and smaller than every lexicon"));
            }
        }
        if !(0.0..=0.2).contains(&self.max_neutral_fraction) {
            return Err(Error::config("max_neutral_fraction must lie in [0, 0.2]"));
        }
        if self.min_neutral > 0
            && (self.neutral.is_empty() || self.min_neutral > max_neutral(self.min_len, self.max_neutral_fraction))
        {
            return Err(Error::config("min_neutral exceeds the neutral share allowed at min_len"));
        }
        if !(0.0..=1.0).contains(&self.jump) {
            return Err(Error::config("jump must lie in [0, 1]"));
        }
        let neutral: HashSet<&String> = self.neutral.iter().collect();
        let mut seen: HashSet<&String> = HashSet::new();
        for lex in &self.lexicons {
            for w in lex {
                if neutral.contains(w) {
                    return Err(Error::config(format!("'{w}' is both neutral and class-specific")));
                }
            }
            let lex_set: HashSet<&String> = lex.iter().collect();
            if !self.allow_overlap && lex_set.iter().any(|w| seen.contains(w)) {
                return Err(Error::config("class lexicons overlap but allow_overlap is false"));
            }
            seen.extend(lex_set);
        }
        Ok(())
    }
}

/// Generates `n_per_class` samples per category, deterministically from `seed`.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<StyledCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<Option<Vec<Vec<usize>>>> = spec
        .lexicons
        .iter()
        .map(|lex| {
            spec.successors.map(|k| {
                let mut order: Vec<usize> = (0..lex.len()).collect();
                order.shuffle(&mut rng);
                let mut next = vec![Vec::with_capacity(k); lex.len()];
                for (pos, &w) in order.iter().enumerate() {
                    next[w] = (1..=k).map(|step| order[(pos + step) % order.len()]).collect();
                }
                next
            })
        })
        .collect();
    // leads[class][neutral word], distinct within a class while the lexicon allows it.
    let leads: Option<Vec<Vec<usize>>> = spec.successors.map(|_| {
        spec.lexicons
            .iter()
            .map(|lex| {
                let mut order: Vec<usize> = (0..lex.len()).collect();
                order.shuffle(&mut rng);
                (0..spec.neutral.len()).map(|n| order[n % order.len()]).collect()
            })
            .collect()
    });
    // Neutral words are dealt from reshuffled decks so each is used about equally often.
    let mut deck: Vec<usize> = Vec::new();
    let mut samples = Vec::with_capacity(spec.n_per_class * spec.categories.len());
    for i in 0..spec.n_per_class {
        for (class, ((label, lexicon), graph)) in spec.categories.iter().zip(&spec.lexicons).zip(&graphs).enumerate() {
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let most = if spec.neutral.is_empty() {
                0
            } else {
                max_neutral(len, spec.max_neutral_fraction)
            };
            let n_neutral = rng.random_range(spec.min_neutral..=most);
            let mut words: Vec<&str> = Vec::with_capacity(len);
            let mut last_neutral = None;
            for _ in 0..n_neutral {
                if deck.is_empty() {
                    deck.extend(0..spec.neutral.len());
                    deck.shuffle(&mut rng);
                }
                let n = deck.pop().expect("refilled");
                words.push(&spec.neutral[n]);
                last_neutral = Some(n);
            }
            let mut current: Option<usize> = None;
            for _ in n_neutral..len {
                let on_graph = spec.jump == 0.0 || !rng.random_bool(spec.jump);
                let next = match (graph, current, &leads, last_neutral) {
                    (Some(g), Some(c), _, _) if on_graph => *g[c].choose(&mut rng).expect("non-empty"),
                    (_, None, Some(l), Some(n)) if on_graph => l[class][n],
                    _ => {
                        let mut i = rng.random_range(0..lexicon.len());
                        while lexicon.len() > 1 && current == Some(i) {
                            i = rng.random_range(0..lexicon.len());
                        }
                        i
                    }
                };
                words.push(&lexicon[next]);
                current = Some(next);
            }
            samples.push(StyledSample {
                id: format!("{}-{}-{:04}", spec.name, label, i),
                text: words.join(" "),
                label: label.clone(),
            });
        }
    }
    Ok(StyledCorpus {
        name: spec.name.clone(),
        categories: spec.categories.clone(),
        samples,
    })
}
