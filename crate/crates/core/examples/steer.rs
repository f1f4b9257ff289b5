// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-trains the toy model, builds activation style vectors and prints one
//! prompt steered towards each style over a few lambdas.

use stylesteer::fixture::{self, FixtureConfig};
use stylesteer::generate::{default_layers, steered_generate, SteerRequest};
use stylesteer::model::Pooling;
use stylesteer::stylevec::{record_activations, style_vector_from_activations, StyleStore};

fn main() -> stylesteer::Result<()> {
    let fx = fixture::build(&FixtureConfig::default())?;
    let layers = default_layers(fx.model.config().n_layers);
    let ds = record_activations(&fx.model, &fx.tokenizer, &fx.corpus, &layers, Pooling::Mean)?;
    let mut store = StyleStore::default();
    for &layer in &layers {
        for style in ["positive", "negative"] {
            store.insert(style_vector_from_activations(&ds, style, layer)?)?;
        }
    }
    for style in ["positive", "negative"] {
        for lambda in [0.0, 0.5, 1.0, 2.0] {
            let r = steered_generate(&fx.model, &fx.tokenizer, &store, &SteerRequest::new("movie", style, lambda, 7))?;
            println!("{style:>8} {lambda:>4}  movie {}", r.text);
        }
    }
    Ok(())
}
