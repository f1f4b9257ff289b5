// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-layer style vectors as mean differences, from trained steering vectors
//! or from recorded activations, and the binary style-vector store.
//!
//! For style `s` at layer `i` the vector is the mean over class-`s` samples
//! minus the mean over every other sample, pooled across the remaining
//! classes (not an average of class means).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{StyledCorpus, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{pool_rows, special, Model, Pooling};
use crate::steer_train::SteeringVectorResult;

pub const STORE_MAGIC: &[u8; 4] = b"SVST";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Trained,
    Activation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Trained => "trained",
            Self::Activation => "activation",
        }
    }

    fn code(self) -> u8 {
        match self {
            Self::Trained => 0,
            Self::Activation => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Self::Trained),
            1 => Ok(Self::Activation),
            other => Err(Error::Format(format!("unknown method code {other}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trained" => Ok(Self::Trained),
            "activation" => Ok(Self::Activation),
            other => Err(Error::config(format!("unknown method '{other}' (trained|activation)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationItem {
    pub id: String,
    pub label: String,
    pub pooled: BTreeMap<usize, Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationDataset {
    pub layers: Vec<usize>,
    pub pooling: Pooling,
    pub categories: Vec<String>,
    pub items: Vec<ActivationItem>,
    /// Ids of samples cut to the model's context length.
    pub truncated: Vec<String>,
}

impl ActivationDataset {
    /// `(id, label, vector)` triples at one layer.
    pub fn at_layer(&self, layer: usize) -> Result<Vec<(&str, &str, &[f32])>> {
        if !self.layers.contains(&layer) {
            return Err(Error::Lookup {
                missing: format!("layer {layer}"),
                available: join(self.layers.iter()),
            });
        }
        Ok(self
            .items
            .iter()
            .map(|it| (it.id.as_str(), it.label.as_str(), it.pooled[&layer].as_slice()))
            .collect())
    }
}

/// Runs one uninjected forward pass per sample over `<bos> text` and pools the
/// text positions of every requested layer.
pub fn record_activations(
    model: &Model,
    tokenizer: &Tokenizer,
    corpus: &StyledCorpus,
    layers: &[usize],
    pooling: Pooling,
) -> Result<ActivationDataset> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if layers.is_empty() {
        return Err(Error::config("no layers requested"));
    }
    for &layer in layers {
        model.config().check_layer(layer)?;
    }
    let max = model.config().max_seq_len;
    let outcomes: Vec<Result<(ActivationItem, bool)>> = corpus
        .samples
        .par_iter()
        .map(|sample| {
            let mut tokens = vec![special::BOS];
            tokens.extend(tokenizer.tokenize(&sample.text));
            let truncated = tokens.len() > max;
            tokens.truncate(max);
            let out = model.forward(&tokens, &[], layers)?;
            let pooled = out
                .trace
                .per_layer
                .iter()
                .map(|(&layer, acts)| (layer, pool_rows(acts, pooling, 1)))
                .collect();
            Ok((
                ActivationItem {
                    id: sample.id.clone(),
                    label: sample.label.clone(),
                    pooled,
                },
                truncated,
            ))
        })
        .collect();

    let mut items = Vec::with_capacity(outcomes.len());
    let mut truncated = Vec::new();
    for outcome in outcomes {
        let (item, cut) = outcome?;
        if cut {
            log::warn!("sample {} truncated to {max} tokens", item.id);
            truncated.push(item.id.clone());
        }
        items.push(item);
    }
    let mut sorted_layers = layers.to_vec();
    sorted_layers.sort_unstable();
    sorted_layers.dedup();
    Ok(ActivationDataset {
        layers: sorted_layers,
        pooling,
        categories: corpus.categories.clone(),
        items,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleVector {
    pub label: String,
    pub layer: usize,
    pub method: Method,
    pub vector: Vec<f32>,
    pub n_style: usize,
    pub n_rest: usize,
}

/// Mean of the `style` vectors minus the pooled mean of all others, in `f64`.
///
/// Items are summed in `(id, bits)` order so the result does not depend on
/// input order. Returns the difference and both sample counts.
pub fn mean_difference(items: &[(&str, &str, &[f32])], style: &str) -> Result<(Vec<f64>, usize, usize)> {
    let (mut own, mut rest): (Vec<&(&str, &str, &[f32])>, Vec<_>) = items.iter().partition(|it| it.1 == style);
    if own.is_empty() {
        return Err(Error::InsufficientData(format!("no vectors for style '{style}'")));
    }
    if rest.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no vectors outside style '{style}' to contrast with"
        )));
    }
    let d = own[0].2.len();
    if let Some(bad) = items.iter().find(|it| it.2.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: bad.2.len(),
        });
    }
    let key = |a: &&(&str, &str, &[f32]), b: &&(&str, &str, &[f32])| {
        a.0.cmp(b.0)
            .then_with(|| a.2.iter().map(|v| v.to_bits()).cmp(b.2.iter().map(|v| v.to_bits())))
    };
    own.sort_by(key);
    rest.sort_by(key);
    let mean = |group: &[&(&str, &str, &[f32])]| {
        let mut sum = vec![0f64; d];
        for (_, _, v) in group {
            for (s, &x) in sum.iter_mut().zip(v.iter()) {
                *s += x as f64;
            }
        }
        let n = group.len() as f64;
        sum.into_iter().map(|s| s / n).collect::<Vec<_>>()
    };
    let diff = mean(&own).iter().zip(mean(&rest)).map(|(a, b)| a - b).collect();
    Ok((diff, own.len(), rest.len()))
}

fn build(items: &[(&str, &str, &[f32])], style: &str, layer: usize, method: Method) -> Result<StyleVector> {
    let (diff, n_style, n_rest) = mean_difference(items, style)?;
    Ok(StyleVector {
        label: style.to_string(),
        layer,
        method,
        vector: diff.into_iter().map(|v| v as f32).collect(),
        n_style,
        n_rest,
    })
}

/// Style vector from converged steering vectors trained at `layer`.
pub fn style_vector_from_trained(
    results: &BTreeMap<String, Vec<SteeringVectorResult>>,
    style: &str,
    layer: usize,
) -> Result<StyleVector> {
    let items: Vec<(&str, &str, &[f32])> = results
        .iter()
        .flat_map(|(label, list)| {
            list.iter()
                .filter(move |r| r.layer == layer && r.converged)
                .map(move |r| (r.sentence_id.as_str(), label.as_str(), r.vector.as_slice()))
        })
        .collect();
    build(&items, style, layer, Method::Trained)
}

/// Style vector from pooled activations recorded at `layer`.
pub fn style_vector_from_activations(ds: &ActivationDataset, style: &str, layer: usize) -> Result<StyleVector> {
    build(&ds.at_layer(layer)?, style, layer, Method::Activation)
}

/// Adjective used by the prompt baseline for the built-in style labels.
pub fn default_adjective(label: &str) -> Option<&'static str> {
    Some(match label {
        "positive" => "positive",
        "negative" => "negative",
        "anger" => "angry",
        "joy" => "joyful",
        "sadness" => "sad",
        "fear" => "fearful",
        "surprise" => "surprised",
        "disgust" => "disgusted",
        "archaic" => "archaic",
        "modern" => "modern",
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleInfo {
    pub label: String,
    /// Empty when the label has no registered adjective.
    pub adjective: String,
}

/// Style vectors keyed by (label, layer, method) plus per-label metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StyleStore {
    pub d_model: usize,
    pub styles: Vec<StyleInfo>,
    pub vectors: Vec<StyleVector>,
}

impl StyleStore {
    /// Builds a store, registering each new label with its default adjective.
    pub fn from_vectors(vectors: Vec<StyleVector>) -> Result<Self> {
        let mut store = Self::default();
        for v in vectors {
            store.insert(v)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, v: StyleVector) -> Result<()> {
        if self.vectors.is_empty() && self.d_model == 0 {
            self.d_model = v.vector.len();
        }
        if v.vector.len() != self.d_model {
            return Err(Error::Dimension {
                expected: self.d_model,
                got: v.vector.len(),
            });
        }
        if v.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::input(format!("style vector for '{}' is not finite", v.label)));
        }
        if !self.styles.iter().any(|s| s.label == v.label) {
            self.styles.push(StyleInfo {
                label: v.label.clone(),
                adjective: default_adjective(&v.label).unwrap_or_default().to_string(),
            });
        }
        self.vectors
            .retain(|o| !(o.label == v.label && o.layer == v.layer && o.method == v.method));
        self.vectors.push(v);
        Ok(())
    }

    pub fn set_adjective(&mut self, label: &str, adjective: &str) -> Result<()> {
        let info = self.styles.iter_mut().find(|s| s.label == label).ok_or_else(|| Error::Lookup {
            missing: format!("style '{label}'"),
            available: String::new(),
        })?;
        info.adjective = adjective.to_string();
        Ok(())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.styles.iter().map(|s| s.label.as_str()).collect()
    }

    pub fn has_style(&self, label: &str) -> bool {
        self.styles.iter().any(|s| s.label == label)
    }

    pub fn adjective(&self, label: &str) -> Option<&str> {
        self.styles
            .iter()
            .find(|s| s.label == label)
            .map(|s| s.adjective.as_str())
            .filter(|a| !a.is_empty())
    }

    /// Sorted layers available for `label`, optionally restricted to a method.
    pub fn layers(&self, label: &str, method: Option<Method>) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .vectors
            .iter()
            .filter(|v| v.label == label && method.is_none_or(|m| v.method == m))
            .map(|v| v.layer)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn methods(&self, label: &str) -> Vec<Method> {
        let mut out: Vec<Method> = self.vectors.iter().filter(|v| v.label == label).map(|v| v.method).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn get(&self, label: &str, layer: usize, method: Method) -> Result<&StyleVector> {
        self.vectors
            .iter()
            .find(|v| v.label == label && v.layer == layer && v.method == method)
            .ok_or_else(|| Error::Lookup {
                missing: format!("style '{label}' at layer {layer} ({method})"),
                available: self.describe(),
            })
    }

    /// Human-readable inventory such as `positive[activation:2,3]`.
    pub fn describe(&self) -> String {
        if self.styles.is_empty() {
            return "nothing (empty store)".to_string();
        }
        self.styles
            .iter()
            .map(|s| {
                let parts: Vec<String> = self
                    .methods(&s.label)
                    .into_iter()
                    .map(|m| format!("{m}:{}", join(self.layers(&s.label, Some(m)).iter())))
                    .collect();
                format!("{}[{}]", s.label, parts.join(" "))
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        put_u32(&mut out, STORE_VERSION);
        put_u32(&mut out, self.d_model as u32);
        put_u32(&mut out, self.styles.len() as u32);
        for s in &self.styles {
            put_str(&mut out, &s.label);
            put_str(&mut out, &s.adjective);
        }
        put_u32(&mut out, self.vectors.len() as u32);
        for v in &self.vectors {
            let idx = self.styles.iter().position(|s| s.label == v.label).expect("registered label");
            out.push(v.method.code());
            put_u32(&mut out, idx as u32);
            put_u32(&mut out, v.layer as u32);
            put_u32(&mut out, v.n_style as u32);
            put_u32(&mut out, v.n_rest as u32);
            for x in &v.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != STORE_MAGIC {
            return Err(Error::Format("not a style-vector store (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != STORE_VERSION {
            return Err(Error::Format(format!(
                "unsupported store version {version} (expected {STORE_VERSION})"
            )));
        }
        let d_model = r.u32()? as usize;
        let n_styles = r.u32()? as usize;
        let mut styles = Vec::with_capacity(n_styles.min(1024));
        for _ in 0..n_styles {
            styles.push(StyleInfo {
                label: r.string()?,
                adjective: r.string()?,
            });
        }
        let n_vectors = r.u32()? as usize;
        let mut vectors = Vec::with_capacity(n_vectors.min(1024));
        for _ in 0..n_vectors {
            let method = Method::from_code(r.take(1)?[0])?;
            let idx = r.u32()? as usize;
            let label = styles
                .get(idx)
                .ok_or_else(|| Error::Format(format!("label index {idx} out of range")))?
                .label
                .clone();
            let layer = r.u32()? as usize;
            let n_style = r.u32()? as usize;
            let n_rest = r.u32()? as usize;
            let raw = r.take(d_model * 4)?;
            let vector = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            vectors.push(StyleVector {
                label,
                layer,
                method,
                vector,
                n_style,
                n_rest,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after store".into()));
        }
        Ok(Self {
            d_model,
            styles,
            vectors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }

    /// Line-delimited text export, one record per vector.
    pub fn export_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::new();
        for v in &self.vectors {
            serde_json::to_writer(
                &mut out,
                &serde_json::json!({
                    "id": format!("{}@{}/{}", v.label, v.layer, v.method),
                    "label": v.label,
                    "layer": v.layer,
                    "method": v.method,
                    "n_style": v.n_style,
                    "n_rest": v.n_rest,
                    "vector": v.vector,
                }),
            )?;
            out.push(b'\n');
        }
        fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated store".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("label is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;
    use crate::model::ModelConfig;

    fn sv(label: &str, id: &str, layer: usize, v: &[f32]) -> (String, SteeringVectorResult) {
        (
            label.to_string(),
            SteeringVectorResult {
                sentence_id: id.into(),
                layer,
                vector: v.to_vec(),
                final_loss: 1.0,
                epochs_used: 1,
                converged: true,
                reproduces_target: true,
                loss_history: vec![],
            },
        )
    }

    fn group(items: Vec<(String, SteeringVectorResult)>) -> BTreeMap<String, Vec<SteeringVectorResult>> {
        let mut m: BTreeMap<String, Vec<SteeringVectorResult>> = BTreeMap::new();
        for (l, r) in items {
            m.entry(l).or_default().push(r);
        }
        m
    }

    #[test]
    fn hand_computed_mean_difference() {
        let m = group(vec![
            sv("s", "a", 2, &[1.0, 0.0]),
            sv("s", "b", 2, &[3.0, 2.0]),
            sv("r", "c", 2, &[0.0, 0.0]),
            sv("r", "d", 2, &[2.0, 2.0]),
            sv("r", "e", 5, &[100.0, 100.0]),
        ]);
        let v = style_vector_from_trained(&m, "s", 2).unwrap();
        assert_eq!(v.vector, vec![1.0, 0.0]);
        assert_eq!((v.n_style, v.n_rest), (2, 2));
        assert_eq!(v.method, Method::Trained);
    }

    #[test]
    fn symmetric_sets_give_zero_and_one_class_is_insufficient() {
        let m = group(vec![sv("a", "1", 0, &[1.0, 2.0]), sv("b", "2", 0, &[1.0, 2.0])]);
        assert_eq!(style_vector_from_trained(&m, "a", 0).unwrap().vector, vec![0.0, 0.0]);
        let only = group(vec![sv("a", "1", 0, &[1.0, 2.0])]);
        match style_vector_from_trained(&only, "a", 0) {
            Err(Error::InsufficientData(msg)) => assert!(msg.contains("outside")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(style_vector_from_trained(&only, "b", 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn store_roundtrip_and_corruption() {
        let mut vectors = Vec::new();
        for label in ["sadness", "joy", "fear", "anger", "surprise", "disgust"] {
            for layer in [1, 2, 3] {
                vectors.push(StyleVector {
                    label: label.into(),
                    layer,
                    method: Method::Activation,
                    vector: (0..8).map(|i| (i as f32 * 0.37 + layer as f32).sin()).collect(),
                    n_style: 10,
                    n_rest: 50,
                });
            }
        }
        let store = StyleStore::from_vectors(vectors).unwrap();
        assert_eq!(store.adjective("anger"), Some("angry"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.svst");
        store.save(&path).unwrap();
        assert_eq!(StyleStore::load(&path).unwrap(), store);

        let mut bad = store.to_bytes();
        bad[0] = b'X';
        assert!(matches!(StyleStore::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = store.to_bytes();
        bad[4] = 9;
        assert!(matches!(StyleStore::from_bytes(&bad), Err(Error::Format(_))));
        let bytes = store.to_bytes();
        assert!(StyleStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());

        let empty = StyleStore::from_vectors(vec![]).unwrap();
        assert_eq!(StyleStore::from_bytes(&empty.to_bytes()).unwrap(), empty);
        assert!(matches!(StyleStore::load(dir.path().join("nope")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn lookup_error_lists_inventory() {
        let store = StyleStore::from_vectors(vec![StyleVector {
            label: "positive".into(),
            layer: 3,
            method: Method::Activation,
            vector: vec![0.0; 4],
            n_style: 1,
            n_rest: 1,
        }])
        .unwrap();
        match store.get("positive", 4, Method::Activation) {
            Err(Error::Lookup { available, .. }) => assert_eq!(available, "positive[activation:3]"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(store.get("positive", 3, Method::Trained).is_err());
    }

    #[test]
    fn recorded_mean_matches_raw_trace() {
        let content = [
            r#"{"text":"a b c","label":"x","id":"1"}"#,
            r#"{"text":"b","label":"y","id":"2"}"#,
        ]
        .join("\n");
        let corpus = parse_corpus(&content, "t", None).unwrap();
        let tok = Tokenizer::from_texts(corpus.samples.iter().map(|s| s.text.as_str()));
        let model = Model::init(ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            vocab_size: tok.len(),
            max_seq_len: 8,
            seed: 1,
        })
        .unwrap();
        let mean = record_activations(&model, &tok, &corpus, &[1, 2], Pooling::Mean).unwrap();
        let last = record_activations(&model, &tok, &corpus, &[1, 2], Pooling::Last).unwrap();
        assert_eq!(mean.items[1].pooled, last.items[1].pooled);

        let mut tokens = vec![special::BOS];
        tokens.extend(tok.tokenize("a b c"));
        let trace = model.forward(&tokens, &[], &[2]).unwrap().trace.per_layer[&2].clone();
        for j in 0..8 {
            let hand = (trace[[1, j]] as f64 + trace[[2, j]] as f64 + trace[[3, j]] as f64) / 3.0;
            assert!((mean.items[0].pooled[&2][j] as f64 - hand).abs() < 1e-6);
        }
        let v = style_vector_from_activations(&mean, "x", 2).unwrap();
        assert_eq!(v.method, Method::Activation);
        assert!(matches!(style_vector_from_activations(&mean, "x", 0), Err(Error::Lookup { .. })));
    }
}
