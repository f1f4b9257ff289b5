// SPDX-License-Identifier: MIT OR Apache-2.0

//! Logistic probes on hidden vectors, ROC curves and AUC.
//!
//! AUC is the Mann-Whitney statistic: the share of (positive, negative) pairs
//! ranked correctly, with ties counting one half. It is computed from integer
//! pair counts, so it agrees exactly with the quadratic pairwise definition.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stylevec::{ActivationDataset, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDataset {
    pub layer: usize,
    pub source: Method,
    pub vectors: Vec<Vec<f32>>,
    pub labels: Vec<String>,
}

impl ProbeDataset {
    pub fn new(layer: usize, source: Method, vectors: Vec<Vec<f32>>, labels: Vec<String>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::input("one label per vector is required"));
        }
        let Some(first) = vectors.first() else {
            return Err(Error::InsufficientData("probe dataset is empty".into()));
        };
        if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
            return Err(Error::Dimension {
                expected: first.len(),
                got: bad.len(),
            });
        }
        let ds = Self {
            layer,
            source,
            vectors,
            labels,
        };
        if ds.classes().len() < 2 {
            return Err(Error::InsufficientData("probing needs at least two labels".into()));
        }
        Ok(ds)
    }

    pub fn from_activations(ds: &ActivationDataset, layer: usize) -> Result<Self> {
        let rows = ds.at_layer(layer)?;
        Self::new(
            layer,
            Method::Activation,
            rows.iter().map(|r| r.2.to_vec()).collect(),
            rows.iter().map(|r| r.1.to_string()).collect(),
        )
    }

    /// Distinct labels in first-appearance order.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in &self.labels {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Split {
    pub fn new(seed: u64) -> Self {
        Self {
            test_fraction: 0.2,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub l2: f64,
    pub max_steps: usize,
    pub tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_steps: 3000,
            tolerance: 1e-6,
        }
    }
}

const MAX_SPLITS: u64 = 5;

/// Logistic regression on standardized features, one-vs-rest per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub layer: usize,
    pub split: Split,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `(class, weights, bias)`; a single entry for two classes.
    pub heads: Vec<(String, Vec<f64>, f64)>,
    pub steps: usize,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl Probe {
    fn standardize(&self, v: &[f32]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&x, (m, s))| (x as f64 - m) / s)
            .collect()
    }

    /// Probability of each head's class.
    pub fn scores(&self, v: &[f32]) -> Vec<f64> {
        let x = self.standardize(v);
        self.heads.iter().map(|(_, w, b)| sigmoid(dot(w, &x) + b)).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn split_indices(ds: &ProbeDataset, split: &Split, need_all_in_test: bool) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(split.test_fraction > 0.0 && split.test_fraction < 1.0) {
        return Err(Error::config("test_fraction must lie strictly between 0 and 1"));
    }
    let n = ds.len();
    let n_test = ((n as f64 * split.test_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let classes = ds.classes();
    for attempt in 0..MAX_SPLITS {
        let mut rng = ChaCha8Rng::seed_from_u64(split.seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let (test, train) = order.split_at(n_test);
        let covers = |idx: &[usize], all: bool| {
            let present: Vec<&String> = classes.iter().filter(|c| idx.iter().any(|&i| &ds.labels[i] == *c)).collect();
            if all {
                present.len() == classes.len()
            } else {
                present.len() >= 2
            }
        };
        if covers(train, true) && covers(test, need_all_in_test) {
            let (mut train, mut test) = (train.to_vec(), test.to_vec());
            train.sort_unstable();
            test.sort_unstable();
            return Ok((train, test));
        }
    }
    Err(Error::InsufficientData(format!(
        "no split out of {MAX_SPLITS} attempts kept every class on both sides"
    )))
}

/// Fits the probe on the training part of a seeded split.
pub fn fit_probe(ds: &ProbeDataset, split: Split, cfg: &ProbeConfig) -> Result<Probe> {
    let classes = ds.classes();
    let (train, test) = split_indices(ds, &split, classes.len() > 2)?;
    let d = ds.vectors[0].len();

    let mut mean = vec![0f64; d];
    for &i in &train {
        for (m, &x) in mean.iter_mut().zip(&ds.vectors[i]) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.len() as f64);
    let mut scale = vec![0f64; d];
    for &i in &train {
        for ((s, &x), m) in scale.iter_mut().zip(&ds.vectors[i]).zip(&mean) {
            *s += (x as f64 - m).powi(2);
        }
    }
    scale.iter_mut().for_each(|s| {
        let sd = (*s / train.len() as f64).sqrt();
        *s = if sd > 1e-12 { sd } else { 1.0 };
    });

    let mut probe = Probe {
        layer: ds.layer,
        split,
        mean,
        scale,
        heads: Vec::new(),
        steps: 0,
        train_idx: train.clone(),
        test_idx: test,
    };
    let x: Vec<Vec<f64>> = train.iter().map(|&i| probe.standardize(&ds.vectors[i])).collect();
    let step = 1.0 / lipschitz(&x, cfg.l2);

    let head_classes: Vec<String> = if classes.len() == 2 {
        vec![classes[0].clone()]
    } else {
        classes
    };
    for class in head_classes {
        let y: Vec<f64> = train.iter().map(|&i| f64::from(u8::from(ds.labels[i] == class))).collect();
        let (w, b, steps) = gradient_descent(&x, &y, cfg, step);
        probe.steps = probe.steps.max(steps);
        probe.heads.push((class, w, b));
    }
    Ok(probe)
}

/// Upper bound on the gradient Lipschitz constant of the mean logistic loss.
fn lipschitz(x: &[Vec<f64>], l2: f64) -> f64 {
    let d = x[0].len();
    let n = x.len() as f64;
    // Power iteration on [X 1]^T [X 1] / n, started from the all-ones vector.
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut lambda = 0.0;
    for _ in 0..50 {
        let mut next = vec![0f64; d + 1];
        for row in x {
            let proj = dot(&v[..d], row) + v[d];
            for (n, r) in next.iter_mut().zip(row) {
                *n += proj * r;
            }
            next[d] += proj;
        }
        next.iter_mut().for_each(|e| *e /= n);
        lambda = next.iter().map(|e| e * e).sum::<f64>().sqrt();
        if lambda == 0.0 {
            break;
        }
        v = next.into_iter().map(|e| e / lambda).collect();
    }
    0.25 * lambda * 1.1 + l2 + 1e-12
}

fn gradient_descent(x: &[Vec<f64>], y: &[f64], cfg: &ProbeConfig, step: f64) -> (Vec<f64>, f64, usize) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut w = vec![0f64; d];
    let mut b = 0f64;
    for it in 0..cfg.max_steps {
        let mut gw = vec![0f64; d];
        let mut gb = 0f64;
        for (row, &t) in x.iter().zip(y) {
            let r = sigmoid(dot(&w, row) + b) - t;
            for (g, &xi) in gw.iter_mut().zip(row) {
                *g += r * xi;
            }
            gb += r;
        }
        for (g, wi) in gw.iter_mut().zip(&w) {
            *g = *g / n + cfg.l2 * wi;
        }
        gb /= n;
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < cfg.tolerance {
            return (w, b, it);
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }
    (w, b, cfg.max_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// `(false positive rate, true positive rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve over descending score thresholds and the tie-aware AUC.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::input("one label per score is required"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the Mann-Whitney U: each correctly ordered pair counts 2, each tie 1.
    let mut twice_u = 0u64;
    let mut points = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // Positives in this group beat every negative with a lower score.
        twice_u += 2 * gp * (n_neg - fp - gn) + gp * gn;
        tp += gp;
        fp += gn;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = (twice_u as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(RocResult { points, auc })
}

/// Area under a piecewise-linear curve by the trapezoid rule.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub layer: usize,
    pub source: Method,
    pub n_train: usize,
    pub n_test: usize,
    /// Binary AUC, or the micro-average for three or more classes.
    pub auc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_auc: Option<BTreeMap<String, f64>>,
    pub roc_points: Vec<(f64, f64)>,
}

/// Held-out binary probe evaluation. The first label is the positive class.
pub fn evaluate_probe(ds: &ProbeDataset, split: Split, cfg: &ProbeConfig) -> Result<ProbeResult> {
    if ds.classes().len() != 2 {
        return multiclass_auc(ds, split, cfg);
    }
    let probe = fit_probe(ds, split, cfg)?;
    let positive = &probe.heads[0].0;
    let scores: Vec<f64> = probe.test_idx.iter().map(|&i| probe.scores(&ds.vectors[i])[0]).collect();
    let labels: Vec<bool> = probe.test_idx.iter().map(|&i| &ds.labels[i] == positive).collect();
    let roc = roc_auc(&scores, &labels)?;
    Ok(ProbeResult {
        layer: ds.layer,
        source: ds.source,
        n_train: probe.train_idx.len(),
        n_test: probe.test_idx.len(),
        auc: roc.auc,
        per_class_auc: None,
        roc_points: roc.points,
    })
}

/// One-vs-rest probes with per-class AUCs and the micro-average over the
/// pooled (score, indicator) pairs of every class.
pub fn multiclass_auc(ds: &ProbeDataset, split: Split, cfg: &ProbeConfig) -> Result<ProbeResult> {
    if ds.classes().len() < 3 {
        return Err(Error::config("multiclass AUC needs at least three classes"));
    }
    let probe = fit_probe(ds, split, cfg)?;
    let test_scores: Vec<Vec<f64>> = probe.test_idx.iter().map(|&i| probe.scores(&ds.vectors[i])).collect();
    let mut per_class = BTreeMap::new();
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    for (c, (class, _, _)) in probe.heads.iter().enumerate() {
        let scores: Vec<f64> = test_scores.iter().map(|s| s[c]).collect();
        let labels: Vec<bool> = probe.test_idx.iter().map(|&i| &ds.labels[i] == class).collect();
        per_class.insert(class.clone(), roc_auc(&scores, &labels)?.auc);
        pooled_scores.extend(scores);
        pooled_labels.extend(labels);
    }
    let micro = roc_auc(&pooled_scores, &pooled_labels)?;
    Ok(ProbeResult {
        layer: ds.layer,
        source: ds.source,
        n_train: probe.train_idx.len(),
        n_test: probe.test_idx.len(),
        auc: micro.auc,
        per_class_auc: Some(per_class),
        roc_points: micro.points,
    })
}

/// One JSON record per probe result.
pub fn write_probe_report(path: impl AsRef<Path>, results: &[ProbeResult]) -> Result<()> {
    let mut out = Vec::new();
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// ROC points as `layer,source,fpr,tpr` rows.
pub fn write_roc_csv(path: impl AsRef<Path>, results: &[ProbeResult]) -> Result<()> {
    let mut out = String::from("layer,source,fpr,tpr\n");
    for r in results {
        for (fpr, tpr) in &r.roc_points {
            out.push_str(&format!("{},{},{fpr},{tpr}\n", r.layer, r.source));
        }
    }
    fs::write(path, out)?;
    Ok(())
}
