// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use stylesteer::corpus::Tokenizer;
use stylesteer::fixture::{self, FixtureConfig};
use stylesteer::model::{Model, Pooling};
use stylesteer::stylevec::{record_activations, style_vector_from_activations, StyleStore};

/// A small, quickly trained version of the toy setting.
pub fn small_config() -> FixtureConfig {
    let mut cfg = FixtureConfig {
        n_layers: 2,
        d_model: 16,
        n_heads: 2,
        n_per_class: 40,
        ..FixtureConfig::default()
    };
    cfg.pretrain.epochs = 2;
    cfg
}

pub fn small_setup() -> (Model, Tokenizer, StyleStore) {
    let fx = fixture::build(&small_config()).unwrap();
    let layers: Vec<usize> = (0..=fx.model.config().n_layers).collect();
    let ds = record_activations(&fx.model, &fx.tokenizer, &fx.corpus, &layers, Pooling::Mean).unwrap();
    let mut store = StyleStore::default();
    for &layer in &layers {
        for label in ["positive", "negative"] {
            store.insert(style_vector_from_activations(&ds, label, layer).unwrap()).unwrap();
        }
    }
    (fx.model, fx.tokenizer, store)
}
