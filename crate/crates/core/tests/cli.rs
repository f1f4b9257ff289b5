// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stylesteer");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_MODEL: &[&str] = &[
    "--n-layers",
    "2",
    "--d-model",
    "16",
    "--n-heads",
    "2",
    "--epochs",
    "2",
    "--n-per-class",
    "40",
];

fn pipeline(dir: &Path, jobs: &str) {
    ok(dir, &["synth-corpus", "--seed", "3", "--n-per-class", "40", "--out", "corpus.jsonl"]);
    let mut init = vec!["init-model", "--seed", "3", "--out", "model.ssv", "--jobs", jobs];
    init.extend_from_slice(SMALL_MODEL);
    ok(dir, &init);
    ok(dir, &["record", "--model", "model.ssv", "--corpus", "corpus.jsonl", "--out", "activations.json"]);
    ok(dir, &["train-steer", "--model", "model.ssv", "--corpus", "corpus.jsonl", "--limit", "4", "--epochs", "60", "--loss-threshold", "30", "--seed", "3", "--out", "trained.jsonl", "--jobs", jobs]);
    ok(dir, &["stylevec", "--method", "activation", "--out", "store.bin"]);
    ok(dir, &["stylevec", "--method", "trained", "--merge", "store.bin", "--out", "store_all.bin"]);
    ok(dir, &["probe", "--input", "activations.json", "--seed", "3", "--out", "probe.jsonl", "--roc", "roc.csv"]);
    ok(dir, &["generate", "--model", "model.ssv", "--store", "store.bin", "--prompt", "food", "--style", "positive", "--lambda", "1.5", "--seed", "7", "--out", "gen.json"]);
    ok(dir, &["sweep", "--model", "model.ssv", "--store", "store.bin", "--style", "positive", "--grid", "0,0.5,1.0", "--seed", "7", "--out", "sweep.csv", "--jobs", jobs]);
}

const ARTIFACTS: &[&str] = &[
    "corpus.jsonl",
    "model.ssv",
    "activations.json",
    "trained.jsonl",
    "store.bin",
    "store_all.bin",
    "probe.jsonl",
    "roc.csv",
    "gen.json",
    "sweep.csv",
    "sweep.jsonl",
];

#[test]
fn pipeline_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "2");
    for name in ARTIFACTS {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name} is empty");
        assert!(x == y, "{name} differs between runs");
    }

    let csv = fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert_eq!(lines[0], "lambda,style,prompt_set,mean,std,oversteer_rate,n,baseline_mean");
    assert!(lines[4].starts_with("baseline,"));
}

#[test]
fn generate_twice_at_lambda_zero_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut init = vec!["init-model", "--seed", "1", "--out", "model.ssv"];
    init.extend_from_slice(SMALL_MODEL);
    ok(d, &init);
    ok(d, &["synth-corpus", "--seed", "1", "--n-per-class", "20", "--out", "c.jsonl"]);
    ok(d, &["record", "--model", "model.ssv", "--corpus", "c.jsonl", "--out", "activations.json"]);
    ok(d, &["stylevec", "--method", "activation", "--out", "store.bin"]);
    let args = |out: &'static str| -> Vec<&'static str> {
        vec!["generate", "--model", "model.ssv", "--store", "store.bin", "--prompt", "food", "--style", "negative", "--lambda", "0", "--seed", "7", "--out", out]
    };
    let s1 = ok(d, &args("g1.json"));
    let s2 = ok(d, &args("g2.json"));
    assert_eq!(s1, s2);
    assert_eq!(fs::read(d.join("g1.json")).unwrap(), fs::read(d.join("g2.json")).unwrap());

    let base = ok(d, &["generate", "--model", "model.ssv", "--store", "store.bin", "--prompt", "food", "--style", "negative", "--baseline", "--seed", "7", "--out", "b.json"]);
    assert!(!base.is_empty());
    let b: serde_json::Value = serde_json::from_slice(&fs::read(d.join("b.json")).unwrap()).unwrap();
    assert_eq!(b["baseline"], true);
    assert_eq!(b["injections"], serde_json::json!([]));
    assert_eq!(b["prompt"], "food Write the answer in a negative manner.");
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.conf"), "# corpus settings\nseed = 9\nn_per_class = 5\nout = from_config.jsonl\n").unwrap();
    ok(d, &["synth-corpus", "--config", "run.conf"]);
    let text = fs::read_to_string(d.join("from_config.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1 + 10);
    ok(d, &["synth-corpus", "--config", "run.conf", "--out", "override.jsonl"]);
    assert_eq!(fs::read(d.join("override.jsonl")).unwrap(), text.as_bytes());

    fs::write(d.join("bad.conf"), "seed 9\n").unwrap();
    assert_eq!(run(d, &["synth-corpus", "--config", "bad.conf"]).status.code(), Some(1));
    assert_eq!(run(d, &["synth-corpus", "--config", "missing.conf"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["generate", "--unknown-flag"]).status.code(), Some(1));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(d, &["synth-corpus", "--out", "x.jsonl"]).status.code(), Some(1), "missing --seed");
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));

    let out = run(d, &["stylevec", "--method", "trained", "--out", "store.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained.jsonl"));

    let out = run(d, &["record", "--model", "nope.ssv", "--corpus", "c.jsonl", "--out", "a.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ssv"));

    fs::write(d.join("broken.jsonl"), "{\"text\": \"hi\"}\n").unwrap();
    let out = run(d, &["init-model", "--seed", "1", "--corpus", "broken.jsonl", "--out", "m.ssv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
