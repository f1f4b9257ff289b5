// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `stylesteer` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 data or format, 3 numerical.
//! `--config FILE` reads `key=value` lines that act like `--key value` flags
//! given right after the subcommand, so flags on the command line win.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{load_corpus, synth_corpus, StyledCorpus, SynthSpec, Tokenizer};
use crate::error::Error;
use crate::evaluate::{default_grid, lambda_sweep, EmotionLexicon, PromptSet, Scorer, SentimentLexicon, SweepConfig};
use crate::fixture::{self, FixtureConfig};
use crate::generate::{prompt_baseline_generate, steered_generate, GenerationResult, Sampling, SteerRequest};
use crate::model::{load_checkpoint, save_checkpoint, Model, Pooling};
use crate::probe::{evaluate_probe, write_probe_report, write_roc_csv, ProbeConfig, ProbeDataset, Split};
use crate::service;
use crate::steer_train::{batch_train, load_trained, save_trained, TrainConfig};
use crate::stylevec::{record_activations, style_vector_from_activations, style_vector_from_trained, ActivationDataset, Method, StyleStore};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stylesteer", version, about = "Style vectors for steering a small transformer", args_override_self = true)]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// File of key=value lines used as default flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pre-train the toy model and write a checkpoint.
    InitModel(InitModelArgs),
    /// Write the synthetic two-class corpus, or one from a JSON recipe.
    SynthCorpus(SynthArgs),
    /// Record pooled activations for every corpus sample.
    Record(RecordArgs),
    /// Train one steering vector per short sample.
    TrainSteer(TrainSteerArgs),
    /// Aggregate style vectors into a store.
    Stylevec(StylevecArgs),
    /// Generate one steered or baseline continuation.
    Generate(GenerateArgs),
    /// Fit held-out linear probes per layer.
    Probe(ProbeArgs),
    /// Score a prompt set over a lambda grid.
    Sweep(SweepArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct InitModelArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Pre-train on this corpus instead of the synthetic one.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_per_class: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// JSON recipe; defaults to the fixture's sentiment corpus.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_per_class: Option<usize>,
}

#[derive(Debug, Args)]
struct RecordArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Taps to record; all of them by default.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long, default_value = "mean")]
    pooling: Pooling,
    #[arg(long)]
    max_chars: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainSteerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Defaults to the middle band for the model depth.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5.0)]
    loss_threshold: f64,
    #[arg(long, default_value_t = 50)]
    max_chars: usize,
    /// Keep at most this many samples per class.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StylevecArgs {
    #[arg(long)]
    method: Method,
    /// Activations (JSON) or trained vectors (JSON lines); defaults to
    /// `activations.json` or `trained.jsonl`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Add to this store instead of starting empty.
    #[arg(long)]
    merge: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SamplingArgs {
    #[arg(long)]
    greedy: bool,
    #[arg(long, default_value_t = 8)]
    top_k: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f32,
    #[arg(long, default_value_t = 12)]
    max_new_tokens: usize,
}

impl SamplingArgs {
    fn sampling(&self) -> Sampling {
        if self.greedy {
            Sampling::Greedy
        } else {
            Sampling::TopK {
                k: self.top_k,
                temperature: self.temperature,
            }
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    prompt: String,
    #[arg(long)]
    style: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long, default_value = "activation")]
    method: Method,
    /// Ask for the style in the prompt instead of injecting.
    #[arg(long)]
    baseline: bool,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Activations (JSON) or trained vectors (JSON lines).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "activation")]
    method: Method,
    #[arg(long, value_delimiter = ',')]
    layer: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// ROC points as CSV.
    #[arg(long)]
    roc: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    style: String,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Bundled prompt set id or a TSV file.
    #[arg(long, default_value = "toy_subjective")]
    prompts: String,
    #[arg(long, default_value = "activation")]
    method: Method,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    no_baseline: bool,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    seed: u64,
    /// CSV path; a JSON-lines mirror is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Lib(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Lib(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(e, Error::Config(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code. Errors go to standard error.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => return report(e),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return report(CliError::Usage("--jobs must be at least 1".into()));
        }
        // A global pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    match e {
        CliError::Usage(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        CliError::Lib(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

const SUBCOMMANDS: &[&str] = &[
    "init-model",
    "synth-corpus",
    "record",
    "train-steer",
    "stylevec",
    "generate",
    "probe",
    "sweep",
    "serve",
];

/// Splices the `--config` file's entries in right after the subcommand.
fn expand_config(argv: Vec<String>) -> CliResult<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = Some(
                argv.get(i + 1)
                    .ok_or_else(|| CliError::Usage("--config needs a path".into()))?
                    .clone(),
            );
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let path = PathBuf::from(path);
    if !path.exists() {
        return Err(Error::MissingFile(path).into());
    }
    let extra = parse_config(&fs::read_to_string(&path)?)?;
    let Some(pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

/// `key=value` lines to flags. `#` starts a comment; `true` and `false`
/// switch boolean flags.
fn parse_config(content: &str) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", idx + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(CliError::Usage(format!("config line {}: bad key", idx + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::InitModel(a) => init_model(a),
        Command::SynthCorpus(a) => synth(a),
        Command::Record(a) => record(a),
        Command::TrainSteer(a) => train_steer(a),
        Command::Stylevec(a) => stylevec(a),
        Command::Generate(a) => generate(a),
        Command::Probe(a) => probe(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
    }
}

/// Model and tokenizer from a checkpoint with an embedded vocabulary.
pub fn load_model(path: &Path) -> crate::Result<(Model, Tokenizer)> {
    let ckpt = load_checkpoint(path)?;
    let vocab = ckpt
        .vocab
        .ok_or_else(|| Error::Format(format!("{} has no embedded vocabulary", path.display())))?;
    let mut model = ckpt.model;
    model.freeze();
    Ok((model, Tokenizer::from_id_list(vocab)?))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn init_model(a: InitModelArgs) -> CliResult<()> {
    let mut cfg = FixtureConfig {
        seed: a.seed,
        ..FixtureConfig::default()
    };
    cfg.n_layers = a.n_layers.unwrap_or(cfg.n_layers);
    cfg.d_model = a.d_model.unwrap_or(cfg.d_model);
    cfg.n_heads = a.n_heads.unwrap_or(cfg.n_heads);
    cfg.max_seq_len = a.max_seq_len.unwrap_or(cfg.max_seq_len);
    cfg.n_per_class = a.n_per_class.unwrap_or(cfg.n_per_class);
    cfg.pretrain.epochs = a.epochs.unwrap_or(cfg.pretrain.epochs);
    cfg.pretrain.learning_rate = a.lr.unwrap_or(cfg.pretrain.learning_rate);
    let fx = match &a.corpus {
        Some(path) => fixture::build_from_corpus(&cfg, load_corpus(path, None)?)?,
        None => fixture::build(&cfg)?,
    };
    save_checkpoint(&a.out, &fx.model, Some(fx.tokenizer.vocab()))?;
    let c = fx.model.config();
    println!(
        "model: {} layers, d_model {}, {} heads, vocab {}, {} parameters",
        c.n_layers,
        c.d_model,
        c.n_heads,
        c.vocab_size,
        fx.model.params().num_parameters()
    );
    if let Some(last) = fx.report.epoch_losses.last() {
        println!("pre-training: {} epochs, final loss {last:.4}", fx.report.epoch_losses.len());
    }
    println!("checksum {}", fx.model.checksum());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(path) => {
            if !path.exists() {
                return Err(Error::MissingFile(path.clone()).into());
            }
            serde_json::from_str(&fs::read_to_string(path)?)?
        }
        None => fixture::sentiment_spec(&FixtureConfig::default()),
    };
    if let Some(n) = a.n_per_class {
        spec.n_per_class = n;
    }
    let corpus = synth_corpus(&spec, a.seed)?;
    corpus.save(&a.out)?;
    print_counts(&corpus);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn print_counts(corpus: &StyledCorpus) {
    let counts: Vec<String> = corpus
        .categories
        .iter()
        .map(|c| format!("{c} {}", corpus.count(c)))
        .collect();
    println!("{} samples ({})", corpus.len(), counts.join(", "));
}

fn record(a: RecordArgs) -> CliResult<()> {
    let (model, tokenizer) = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus, a.max_chars)?;
    let layers = a.layers.unwrap_or_else(|| (0..model.config().n_taps()).collect());
    let ds = record_activations(&model, &tokenizer, &corpus, &layers, a.pooling)?;
    write_json(&a.out, &ds)?;
    print_counts(&corpus);
    println!("recorded layers {:?}", ds.layers);
    if !ds.truncated.is_empty() {
        println!("{} samples cut to the context length", ds.truncated.len());
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn limit_per_class(corpus: StyledCorpus, limit: Option<usize>) -> StyledCorpus {
    let Some(limit) = limit else {
        return corpus;
    };
    let mut seen = std::collections::BTreeMap::<String, usize>::new();
    let samples = corpus
        .samples
        .into_iter()
        .filter(|s| {
            let n = seen.entry(s.label.clone()).or_default();
            *n += 1;
            *n <= limit
        })
        .collect();
    StyledCorpus { samples, ..corpus }
}

fn train_steer(a: TrainSteerArgs) -> CliResult<()> {
    let (model, tokenizer) = load_model(&a.model)?;
    let corpus = limit_per_class(load_corpus(&a.corpus, None)?, a.limit);
    let layers = a
        .layers
        .unwrap_or_else(|| crate::generate::default_layers(model.config().n_layers));
    let cfg = TrainConfig {
        layer: layers.first().copied().unwrap_or(0),
        max_epochs: a.epochs,
        learning_rate: a.lr,
        loss_threshold: a.loss_threshold,
        ..TrainConfig::default()
    };
    let report = batch_train(&model, &tokenizer, &corpus, &layers, &cfg, a.max_chars, a.seed)?;
    save_trained(&a.out, &report.results)?;
    for (label, c) in &report.counts {
        println!("{label}: {}/{} converged", c.converged, c.attempted);
    }
    if !report.skipped.is_empty() {
        println!("{} samples skipped", report.skipped.len());
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.counts.values().all(|c| c.converged == 0) && report.warnings.iter().any(|w| w.contains("divergence")) {
        return Err(Error::Divergence {
            epochs: a.epochs,
            last_loss: f64::NAN,
            last_vector: Vec::new(),
        }
        .into());
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn stylevec(a: StylevecArgs) -> CliResult<()> {
    let input = a.input.unwrap_or_else(|| {
        PathBuf::from(match a.method {
            Method::Trained => "trained.jsonl",
            Method::Activation => "activations.json",
        })
    });
    let mut store = match &a.merge {
        Some(path) => StyleStore::load(path)?,
        None => StyleStore::default(),
    };
    match a.method {
        Method::Trained => {
            let trained = load_trained(&input)?;
            if trained.values().flatten().all(|r| !r.converged) {
                return Err(Error::InsufficientData(format!("no converged vectors in {}", input.display())).into());
            }
            let mut layers: Vec<usize> = trained.values().flatten().map(|r| r.layer).collect();
            layers.sort_unstable();
            layers.dedup();
            let layers = a.layers.unwrap_or(layers);
            let labels: Vec<String> = trained.keys().cloned().collect();
            for &layer in &layers {
                for label in &labels {
                    store.insert(style_vector_from_trained(&trained, label, layer)?)?;
                }
            }
        }
        Method::Activation => {
            let ds = read_activations(&input)?;
            let layers = a.layers.unwrap_or_else(|| ds.layers.clone());
            for &layer in &layers {
                for label in &ds.categories {
                    store.insert(style_vector_from_activations(&ds, label, layer)?)?;
                }
            }
        }
    }
    store.save(&a.out)?;
    println!("{}", store.describe().trim_end());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn read_activations(path: &Path) -> crate::Result<ActivationDataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Serialize)]
struct GenerateOutput<'a> {
    #[serde(flatten)]
    result: &'a GenerationResult,
    style: &'a str,
    lambda: f64,
    seed: u64,
    sentiment: f64,
    emotions: std::collections::BTreeMap<String, f64>,
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let (model, tokenizer) = load_model(&a.model)?;
    let store = StyleStore::load(&a.store)?;
    let sampling = a.sampling.sampling();
    let result = if a.baseline {
        if !store.has_style(&a.style) {
            return Err(Error::Lookup {
                missing: format!("style '{}'", a.style),
                available: store.labels().join(", "),
            }
            .into());
        }
        prompt_baseline_generate(
            &model,
            &tokenizer,
            &store,
            &a.prompt,
            &a.style,
            sampling,
            a.sampling.max_new_tokens,
            a.seed,
        )?
    } else {
        let req = SteerRequest {
            layers: a.layers,
            method: a.method,
            sampling,
            max_new_tokens: a.sampling.max_new_tokens,
            ..SteerRequest::new(a.prompt.clone(), a.style.clone(), a.lambda, a.seed)
        };
        steered_generate(&model, &tokenizer, &store, &req)?
    };
    let out = GenerateOutput {
        result: &result,
        style: &a.style,
        lambda: if a.baseline { 0.0 } else { a.lambda },
        seed: a.seed,
        sentiment: SentimentLexicon::bundled()?.score(&result.text),
        emotions: EmotionLexicon::bundled()?.scores(&result.text),
    };
    write_json(&a.out, &out)?;
    println!("{}", result.text);
    if result.oversteer.flagged {
        println!("oversteer: longest run {}, distinct ratio {:.2}", result.oversteer.max_repeat_run, result.oversteer.distinct_ratio);
    }
    Ok(())
}

fn probe(a: ProbeArgs) -> CliResult<()> {
    let split = Split {
        test_fraction: a.test_fraction,
        seed: a.seed,
    };
    let cfg = ProbeConfig::default();
    let mut results = Vec::new();
    match a.method {
        Method::Activation => {
            let ds = read_activations(&a.input)?;
            for layer in a.layer.unwrap_or_else(|| ds.layers.clone()) {
                results.push(evaluate_probe(&ProbeDataset::from_activations(&ds, layer)?, split, &cfg)?);
            }
        }
        Method::Trained => {
            let trained = load_trained(&a.input)?;
            let mut layers: Vec<usize> = trained.values().flatten().map(|r| r.layer).collect();
            layers.sort_unstable();
            layers.dedup();
            for layer in a.layer.unwrap_or(layers) {
                let (vectors, labels) = trained
                    .iter()
                    .flat_map(|(label, list)| {
                        list.iter()
                            .filter(move |r| r.layer == layer && r.converged)
                            .map(move |r| (r.vector.clone(), label.clone()))
                    })
                    .unzip();
                let ds = ProbeDataset::new(layer, Method::Trained, vectors, labels)?;
                results.push(evaluate_probe(&ds, split, &cfg)?);
            }
        }
    }
    write_probe_report(&a.out, &results)?;
    if let Some(roc) = &a.roc {
        write_roc_csv(roc, &results)?;
    }
    for r in &results {
        println!("layer {:>3}  auc {:.4}  (train {}, test {})", r.layer, r.auc, r.n_train, r.n_test);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let (model, tokenizer) = load_model(&a.model)?;
    let store = StyleStore::load(&a.store)?;
    let path = Path::new(&a.prompts);
    let prompts = if path.exists() {
        PromptSet::load(path)?
    } else {
        PromptSet::bundled(&a.prompts)?
    };
    let scorer = Scorer::for_style(&a.style)?;
    let cfg = SweepConfig {
        grid: a.grid.unwrap_or_else(default_grid),
        method: a.method,
        layers: a.layers,
        sampling: a.sampling.sampling(),
        max_new_tokens: a.sampling.max_new_tokens,
        baseline: !a.no_baseline,
        ..SweepConfig::new(a.seed)
    };
    let table = lambda_sweep(&model, &tokenizer, &store, &prompts, &a.style, &scorer, &cfg)?;
    table.write(&a.out)?;
    for r in &table.rows {
        println!(
            "lambda {:>5}  mean {:+.3}  std {:.3}  oversteer {:.2}",
            r.lambda.map(|l| l.to_string()).unwrap_or_default(),
            r.mean,
            r.std,
            r.oversteer_rate
        );
    }
    if let Some(b) = table.baseline_mean() {
        println!("baseline      mean {b:+.3}");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let state = service::AppState::load(&a.model, &a.store)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address: {e}")))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(state, addr))?;
    Ok(())
}
