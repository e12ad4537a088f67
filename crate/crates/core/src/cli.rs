//! Command-line surface: strict JSON run configuration, environment
//! resolution, the six subcommands (train, complete, eval, robust,
//! bench, report), and exit-code discipline.

use crate::corpus::{build_vocabulary, load_corpus, split_corpus, tokenize_code, Vocabulary};
use crate::encoder::EncoderConfig;
use crate::fusion::{FusionMode, HybridModel};
use crate::generator::{argmax, generate_with, DecodeStrategy, GeneratorConfig};
use crate::metrics::{
    self, accuracy, benchmark, bleu, precision_recall_f1, semantic_consistency,
    ClassificationCounts, ClassificationRow, EfficiencyRow, GenerationRow, MetricError,
    MetricsReport,
};
use crate::remote::{remote_complete, RemoteBackend, DEFAULT_TIMEOUT_MS};
use crate::robustness::{run_robustness_suite, RobustnessConfig, RobustnessError};
use crate::training::{
    load_checkpoint, make_examples, save_checkpoint, CheckpointBundle, TrainConfig, TrainError,
    Trainer,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_REMOTE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub const CHECKPOINT_FILE: &str = "checkpoint.hcc1";

/// Command failures carrying their exit class. Usage errors never reach
/// this type; clap reports those before dispatch.
#[derive(Debug)]
pub enum CliError {
    Data(String),
    Remote(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => EXIT_DATA,
            CliError::Remote(_) => EXIT_REMOTE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Remote(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<crate::corpus::CorpusError> for CliError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. }
            | TrainError::OutOfOrderPhase { .. }
            | TrainError::NoSuchPhase { .. }
            | TrainError::Model(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Empty | MetricError::BadMaxN | MetricError::Io(_) | MetricError::Json(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<RobustnessError> for CliError {
    fn from(e: RobustnessError) -> Self {
        match e {
            RobustnessError::BadRate { .. } | RobustnessError::Empty => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<crate::remote::RemoteError> for CliError {
    fn from(e: crate::remote::RemoteError) -> Self {
        CliError::Remote(e.to_string())
    }
}

impl From<crate::fusion::FusionError> for CliError {
    fn from(e: crate::fusion::FusionError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    pub bleu_max_n: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { bleu_max_n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteSettings {
    pub url: Option<String>,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings {
            url: None,
            api_key: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchOptions {
    pub prompts: usize,
    pub max_new: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            prompts: 8,
            max_new: 16,
        }
    }
}

/// The full run configuration. Unknown keys are rejected by name;
/// absent keys take the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub encoder: EncoderConfig,
    pub generator: GeneratorConfig,
    pub fusion_mode: FusionMode,
    pub train: TrainConfig,
    pub split: [f64; 3],
    pub vocab_max_size: usize,
    pub vocab_min_freq: usize,
    pub metrics: MetricOptions,
    pub robustness: RobustnessConfig,
    pub bench: BenchOptions,
    pub remote: RemoteSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            output: PathBuf::from("out"),
            encoder: EncoderConfig::default(),
            generator: GeneratorConfig::default(),
            fusion_mode: FusionMode::Static,
            train: TrainConfig::default(),
            split: [0.8, 0.1, 0.1],
            vocab_max_size: 512,
            vocab_min_freq: 1,
            metrics: MetricOptions::default(),
            robustness: RobustnessConfig::default(),
            bench: BenchOptions::default(),
            remote: RemoteSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(CliError::Data(format!(
                "split ratios {:?} must be nonnegative and sum to 1",
                self.split
            )));
        }
        if self.metrics.bleu_max_n == 0 {
            return Err(CliError::Data("bleu_max_n must be positive".into()));
        }
        self.train.validate().map_err(CliError::from)?;
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&body)
        .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Flag > environment > config, per setting.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSettings {
    pub seed: u64,
    pub remote_url: Option<String>,
    pub remote_api_key: Option<String>,
}

pub fn resolve_environment_with(
    get_env: impl Fn(&str) -> Option<String>,
    flag_seed: Option<u64>,
    flag_remote_url: Option<String>,
    config: &RunConfig,
) -> Result<EffectiveSettings, CliError> {
    let env_seed = match get_env("CC_SEED") {
        Some(raw) => Some(raw.trim().parse::<u64>().map_err(|_| {
            CliError::Data(format!("CC_SEED must be an unsigned integer, got {raw:?}"))
        })?),
        None => None,
    };
    let seed = flag_seed.or(env_seed).unwrap_or(config.train.seed);
    let remote_url = flag_remote_url
        .or_else(|| get_env("CC_REMOTE_URL"))
        .or_else(|| config.remote.url.clone());
    let remote_api_key = get_env("CC_REMOTE_API_KEY").or_else(|| config.remote.api_key.clone());
    Ok(EffectiveSettings {
        seed,
        remote_url,
        remote_api_key,
    })
}

pub fn resolve_environment(
    flag_seed: Option<u64>,
    flag_remote_url: Option<String>,
    config: &RunConfig,
) -> Result<EffectiveSettings, CliError> {
    resolve_environment_with(
        |key| std::env::var(key).ok(),
        flag_seed,
        flag_remote_url,
        config,
    )
}

#[derive(Debug, Parser)]
#[command(
    name = "fusecc",
    version,
    about = "Hybrid code completion: bidirectional context encoder fused with a causal generator"
)]
struct Cli {
    /// Path to a JSON run configuration; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training seed override (wins over CC_SEED and the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Remote completion endpoint override (wins over CC_REMOTE_URL)
    #[arg(long, global = true)]
    remote_url: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Local,
    Remote,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the four training phases and write checkpoint + loss curves
    Train,
    /// Complete a prompt with the local model or the remote backend
    Complete {
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 16)]
        max_new: usize,
        #[arg(long, value_enum, default_value_t = Backend::Local)]
        backend: Backend,
    },
    /// Score accuracy/P/R/F1 and BLEU/executability/consistency on the test split
    Eval,
    /// Run the four-scenario perturbation suite
    Robust,
    /// Measure response time, memory, and generation speed
    Bench,
    /// Render tables/*.csv and figures/*.csv from metrics.json
    Report,
}

/// Parses argv and dispatches. Returns the process exit code instead of
/// exiting so tests can drive it in-process.
pub fn run_command<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("fusecc: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let settings = resolve_environment(cli.seed, cli.remote_url.clone(), &config)?;
    match cli.command {
        Command::Train => cmd_train(&config, &settings),
        Command::Complete {
            prompt,
            max_new,
            backend,
        } => cmd_complete(&config, &settings, &prompt, max_new, backend),
        Command::Eval => cmd_eval(&config),
        Command::Robust => cmd_robust(&config),
        Command::Bench => cmd_bench(&config),
        Command::Report => cmd_report(&config),
    }
}

struct PreparedCorpus {
    vocabulary: Vocabulary,
    train_ids: Vec<Vec<u32>>,
    test_ids: Vec<Vec<u32>>,
}

/// Tokenize, build or adopt a vocabulary, and split. The split is keyed
/// by the training seed so every subcommand sees the same partition.
fn prepare_corpus(
    config: &RunConfig,
    seed: u64,
    existing_vocab: Option<&Vocabulary>,
) -> Result<PreparedCorpus, CliError> {
    let sources = load_corpus(&config.corpus)
        .map_err(|e| CliError::Data(format!("corpus {}: {e}", config.corpus.display())))?;
    if sources.is_empty() {
        return Err(CliError::Data(format!(
            "corpus {} holds no samples",
            config.corpus.display()
        )));
    }
    let tokenized: Vec<Vec<String>> = sources
        .iter()
        .map(|s| tokenize_code(s))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("corpus {}: {e}", config.corpus.display())))?;
    let vocabulary = match existing_vocab {
        Some(v) => v.clone(),
        None => build_vocabulary(&tokenized, config.vocab_max_size, config.vocab_min_freq)?,
    };
    let id_samples: Vec<Vec<u32>> = tokenized.iter().map(|t| vocabulary.encode(t)).collect();
    let split = split_corpus(id_samples, config.split, seed)?;
    Ok(PreparedCorpus {
        vocabulary,
        train_ids: split.train,
        test_ids: split.test,
    })
}

fn load_bundle(config: &RunConfig) -> Result<CheckpointBundle, CliError> {
    let path = config.output.join(CHECKPOINT_FILE);
    if !path.exists() {
        return Err(CliError::Data(format!(
            "no checkpoint at {}; run `fusecc train` first",
            path.display()
        )));
    }
    Ok(load_checkpoint(&path)?)
}

fn cmd_train(config: &RunConfig, settings: &EffectiveSettings) -> Result<(), CliError> {
    let mut train_config = config.train.clone();
    train_config.seed = settings.seed;
    let prepared = prepare_corpus(config, train_config.seed, None)?;
    let examples = make_examples(&prepared.train_ids, train_config.window);
    if examples.is_empty() {
        return Err(CliError::Data(
            "training split yields no (prefix, next-token) examples".into(),
        ));
    }

    let vocab_size = prepared.vocabulary.size();
    let mut trainer = Trainer::new(
        config.encoder.clone().with_vocab(vocab_size),
        config.generator.clone().with_vocab(vocab_size),
        config.fusion_mode,
        train_config.clone(),
    )?;
    let reports = trainer.train_full(&examples)?;

    std::fs::create_dir_all(&config.output)?;
    let logs = config.output.join("logs");
    std::fs::create_dir_all(&logs)?;
    for report in &reports {
        let mut body = String::from("epoch,loss\n");
        for (epoch, loss) in report.loss_curve.iter().enumerate() {
            body.push_str(&format!("{epoch},{loss}\n"));
        }
        std::fs::write(logs.join(format!("train_phase{}.csv", report.phase)), body)?;
    }

    let checkpoint = config.output.join(CHECKPOINT_FILE);
    save_checkpoint(
        &trainer.model,
        &prepared.vocabulary,
        &train_config,
        trainer.phases_completed(),
        &checkpoint,
    )?;
    for report in &reports {
        let last = report.loss_curve.last().copied();
        match last {
            Some(loss) => println!(
                "phase {}: {} epochs, final loss {loss:.6}",
                report.phase, report.epochs
            ),
            None => println!("phase {}: 0 epochs (skipped)", report.phase),
        }
    }
    println!(
        "wrote {} ({} examples, vocabulary {})",
        checkpoint.display(),
        examples.len(),
        vocab_size
    );
    Ok(())
}

fn cmd_complete(
    config: &RunConfig,
    settings: &EffectiveSettings,
    prompt: &str,
    max_new: usize,
    backend: Backend,
) -> Result<(), CliError> {
    match backend {
        Backend::Remote => {
            let backend = RemoteBackend::from_settings(
                settings.remote_url.clone(),
                settings.remote_api_key.clone(),
                config.remote.timeout_ms,
            );
            let completion = remote_complete(prompt, max_new, 0.0, &backend)?;
            println!("{completion}");
        }
        Backend::Local => {
            let bundle = load_bundle(config)?;
            let tokens = tokenize_code(prompt)
                .map_err(|e| CliError::Data(format!("prompt does not lex: {e}")))?;
            let ids = bundle.vocabulary.encode(&tokens);
            let generated = bundle
                .model
                .generate(&ids, max_new, DecodeStrategy::Greedy)?;
            let words = bundle.vocabulary.decode(&generated)?;
            println!("{}", words.join(" "));
        }
    }
    Ok(())
}

/// Test-split protocol shared by eval and bench: the first half of each
/// sample is the prompt, the rest is the reference completion.
fn split_sample(ids: &[u32]) -> Option<(&[u32], &[u32])> {
    if ids.len() < 2 {
        return None;
    }
    let cut = (ids.len() / 2).max(1);
    Some((&ids[..cut], &ids[cut..]))
}

fn merge_metrics<F>(config: &RunConfig, update: F) -> Result<(), CliError>
where
    F: FnOnce(&mut MetricsReport),
{
    std::fs::create_dir_all(&config.output)?;
    let path = config.output.join("metrics.json");
    let mut report = if path.exists() {
        metrics::load_metrics_json(&path)?
    } else {
        MetricsReport::default()
    };
    update(&mut report);
    metrics::write_metrics_json(&report, &path)?;
    Ok(())
}

/// The three rows every table reports: each single path under the
/// shared head, then the fused distribution.
fn model_rows(
    model: &HybridModel,
) -> Vec<(&'static str, Box<dyn Fn(&[u32]) -> Result<Vec<f64>, crate::fusion::FusionError> + '_>)>
{
    vec![
        ("Encoder", Box::new(|ids| model.encoder_path_distribution(ids))),
        (
            "Generator",
            Box::new(|ids| model.generator_path_distribution(ids)),
        ),
        ("Hybrid", Box::new(|ids| model.next_distribution(ids))),
    ]
}

fn cmd_eval(config: &RunConfig) -> Result<(), CliError> {
    let bundle = load_bundle(config)?;
    let prepared = prepare_corpus(
        config,
        bundle.train_config.seed,
        Some(&bundle.vocabulary),
    )?;
    let examples = make_examples(&prepared.test_ids, bundle.train_config.window);
    if examples.is_empty() {
        return Err(CliError::Data(
            "test split yields no (prefix, next-token) examples".into(),
        ));
    }

    let mut classification = Vec::new();
    let mut generation = Vec::new();
    for (name, dist) in model_rows(&bundle.model) {
        let mut counts = ClassificationCounts::default();
        for ex in &examples {
            let predicted = argmax(&dist(&ex.prefix)?) as u32;
            counts.observe(ex.label, predicted);
        }
        let acc = accuracy(&counts)?;
        let scores = precision_recall_f1(&counts)?;
        classification.push(ClassificationRow {
            model: name.to_string(),
            accuracy: acc,
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
        });

        let mut bleu_sum = 0.0;
        let mut consistency_sum = 0.0;
        let mut candidates = Vec::new();
        let mut scored = 0usize;
        for ids in &prepared.test_ids {
            let Some((prompt, reference)) = split_sample(ids) else {
                continue;
            };
            let candidate = generate_with(&dist, prompt, reference.len(), DecodeStrategy::Greedy)?;
            bleu_sum += bleu(&candidate, reference, config.metrics.bleu_max_n)?.score;
            consistency_sum +=
                semantic_consistency(&bundle.model.encoder, &candidate, reference)?;
            candidates.push(bundle.vocabulary.decode(&candidate)?.join(" "));
            scored += 1;
        }
        if scored == 0 {
            return Err(CliError::Data(
                "test split has no samples of 2+ tokens to complete".into(),
            ));
        }
        generation.push(GenerationRow {
            model: name.to_string(),
            bleu: bleu_sum / scored as f64,
            executability: metrics::executability_rate(&candidates)?,
            consistency: consistency_sum / scored as f64,
        });
    }

    merge_metrics(config, |report| {
        report.classification = classification;
        report.generation = generation;
    })?;
    println!(
        "eval: {} test examples, {} completion samples; metrics.json updated",
        examples.len(),
        prepared.test_ids.iter().filter(|s| s.len() >= 2).count()
    );
    Ok(())
}

fn cmd_robust(config: &RunConfig) -> Result<(), CliError> {
    let bundle = load_bundle(config)?;
    let prepared = prepare_corpus(
        config,
        bundle.train_config.seed,
        Some(&bundle.vocabulary),
    )?;
    let examples = make_examples(&prepared.test_ids, bundle.train_config.window);
    if examples.is_empty() {
        return Err(CliError::Data(
            "test split yields no (prefix, next-token) examples".into(),
        ));
    }
    let model = &bundle.model;
    let report = run_robustness_suite(
        |ids| model.next_distribution(ids).map(|d| argmax(&d) as u32),
        &examples,
        &prepared.vocabulary,
        &config.robustness,
    )?;
    let rows = report.rows;
    merge_metrics(config, |metrics_report| {
        metrics_report.robustness = rows;
    })?;
    println!("robust: 4 scenarios over {} examples; metrics.json updated", examples.len());
    Ok(())
}

fn cmd_bench(config: &RunConfig) -> Result<(), CliError> {
    let bundle = load_bundle(config)?;
    let prepared = prepare_corpus(
        config,
        bundle.train_config.seed,
        Some(&bundle.vocabulary),
    )?;
    let prompts: Vec<Vec<u32>> = prepared
        .test_ids
        .iter()
        .filter_map(|ids| split_sample(ids).map(|(p, _)| p.to_vec()))
        .take(config.bench.prompts.max(1))
        .collect();
    if prompts.is_empty() {
        return Err(CliError::Data(
            "test split has no samples of 2+ tokens to benchmark".into(),
        ));
    }

    let mut efficiency = Vec::new();
    for (name, dist) in model_rows(&bundle.model) {
        let result = benchmark(
            |prompt, max_new| generate_with(&dist, prompt, max_new, DecodeStrategy::Greedy),
            &prompts,
            config.bench.max_new,
        )?;
        efficiency.push(EfficiencyRow {
            model: name.to_string(),
            art_ms: result.art_ms,
            memory_gb: result.memory_gb,
            tokens_per_second: result.tokens_per_second,
        });
    }
    merge_metrics(config, |report| {
        report.efficiency = efficiency;
    })?;
    println!(
        "bench: {} prompts x {} tokens per model; metrics.json updated",
        prompts.len(),
        config.bench.max_new
    );
    Ok(())
}

fn cmd_report(config: &RunConfig) -> Result<(), CliError> {
    let path = config.output.join("metrics.json");
    if !path.exists() {
        return Err(CliError::Data(format!(
            "no metrics at {}; run `fusecc eval` first",
            path.display()
        )));
    }
    let report = metrics::load_metrics_json(&path)?;
    metrics::write_tables(&report, config.output.join("tables"))?;
    metrics::write_figures(&report, config.output.join("figures"))?;
    println!(
        "report: tables and figures rendered under {}",
        config.output.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn minimal_config_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"corpus": "data.jsonl", "output": "run"}"#).unwrap();
        let config = load_config(&path).unwrap();
        assert_eq!(config.corpus, PathBuf::from("data.jsonl"));
        assert_eq!(config.output, PathBuf::from("run"));
        assert_eq!(config.train.batch_size, 16);
        assert_eq!(config.train.rates, [0.1, 0.1, 0.05, 0.01]);
        assert_eq!(config.train.epochs, [30, 30, 20, 20]);
        assert_eq!(config.encoder.d_model, 64);
        assert_eq!(config.fusion_mode, FusionMode::Static);
        assert_eq!(config.split, [0.8, 0.1, 0.1]);
        assert_eq!(config.robustness.noisy_rate, 0.1);
        assert_eq!(config.robustness.incomplete_rate, 0.2);
        assert_eq!(config.robustness.abnormal_rate, 0.1);
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"corpus": "x", "fusoin": "static"}"#).unwrap();
        let err = load_config(&path).unwrap_err();
        assert!(matches!(err, CliError::Data(_)));
        assert!(err.message().contains("fusoin"), "{}", err.message());
    }

    #[test]
    fn bad_split_ratios_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"split": [0.5, 0.5, 0.5]}"#).unwrap();
        let err = load_config(&path).unwrap_err();
        assert!(err.message().contains("sum to 1"), "{}", err.message());
    }

    fn env_map(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |key: &str| map.get(key).cloned()
    }

    #[test]
    fn settings_precedence_flag_env_config() {
        let mut config = RunConfig::default();
        config.train.seed = 3;
        config.remote.url = Some("http://config.example".into());

        let none = env_map(&[]);
        let s = resolve_environment_with(&none, None, None, &config).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.remote_url.as_deref(), Some("http://config.example"));

        let env = env_map(&[("CC_SEED", "7"), ("CC_REMOTE_URL", "http://env.example")]);
        let s = resolve_environment_with(&env, None, None, &config).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.remote_url.as_deref(), Some("http://env.example"));

        let s = resolve_environment_with(
            &env,
            Some(9),
            Some("http://flag.example".into()),
            &config,
        )
        .unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.remote_url.as_deref(), Some("http://flag.example"));
    }

    #[test]
    fn non_integer_cc_seed_is_a_data_error() {
        let config = RunConfig::default();
        let env = env_map(&[("CC_SEED", "lots")]);
        let err = resolve_environment_with(&env, None, None, &config).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_DATA);
        assert!(err.message().contains("CC_SEED"));
    }

    #[test]
    fn no_env_means_stub_backend() {
        let config = RunConfig::default();
        let s = resolve_environment_with(env_map(&[]), None, None, &config).unwrap();
        assert!(s.remote_url.is_none());
        let backend =
            RemoteBackend::from_settings(s.remote_url, s.remote_api_key, config.remote.timeout_ms);
        assert!(matches!(
            backend.mode,
            crate::remote::BackendMode::Stub
        ));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_command(["fusecc", "complete"]), EXIT_USAGE);
        assert_eq!(run_command(["fusecc", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run_command(["fusecc"]), EXIT_USAGE);
        assert_eq!(run_command(["fusecc", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_corpus_exits_two_naming_path() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("config.json");
        let corpus = dir.path().join("absent.jsonl");
        let output = dir.path().join("out");
        std::fs::write(
            &config_path,
            serde_json::json!({
                "corpus": corpus,
                "output": output,
            })
            .to_string(),
        )
        .unwrap();
        let code = run_command([
            "fusecc",
            "train",
            "--config",
            config_path.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn eval_without_checkpoint_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("config.json");
        std::fs::write(
            &config_path,
            serde_json::json!({
                "corpus": dir.path().join("c.jsonl"),
                "output": dir.path().join("out"),
            })
            .to_string(),
        )
        .unwrap();
        let code = run_command([
            "fusecc",
            "eval",
            "--config",
            config_path.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }

    fn tiny_pipeline_config(dir: &Path) -> PathBuf {
        let corpus = dir.join("corpus.jsonl");
        let mut lines = String::new();
        for i in 0..12 {
            lines.push_str(&format!(
                "{}\n",
                serde_json::json!({
                    "code": format!("v{i} = f{i} ( a{i} , b{i} )")
                })
            ));
        }
        std::fs::write(&corpus, lines).unwrap();
        let config_path = dir.join("config.json");
        let config = serde_json::json!({
            "corpus": corpus,
            "output": dir.join("out"),
            "encoder": {"layers": 1, "d_model": 16, "heads": 2, "d_ff": 32, "max_seq_len": 16},
            "generator": {"layers": 1, "d_model": 16, "heads": 2, "d_ff": 32, "max_seq_len": 16},
            "train": {"seed": 11, "batch_size": 8, "epochs": [2, 2, 1, 1], "window": 8},
            "split": [0.7, 0.1, 0.2],
            "bench": {"prompts": 2, "max_new": 4}
        });
        std::fs::write(&config_path, config.to_string()).unwrap();
        config_path
    }

    #[test]
    fn pipeline_smoke_train_eval_robust_bench_report() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = tiny_pipeline_config(dir.path());
        let arg = config_path.to_str().unwrap();
        for sub in ["train", "eval", "robust", "bench", "report"] {
            let code = run_command(["fusecc", sub, "--config", arg]);
            assert_eq!(code, EXIT_OK, "subcommand {sub} failed");
        }
        let out = dir.path().join("out");
        assert!(out.join(CHECKPOINT_FILE).exists());
        for phase in 0..4 {
            assert!(out.join(format!("logs/train_phase{phase}.csv")).exists());
        }
        assert!(out.join("metrics.json").exists());
        for table in [
            "table1_accuracy.csv",
            "table2_generation.csv",
            "table3_efficiency.csv",
            "table4_robustness.csv",
        ] {
            assert!(out.join("tables").join(table).exists(), "{table}");
        }
        for figure in [
            "figure_accuracy.csv",
            "figure_generation.csv",
            "figure_efficiency.csv",
            "figure_robustness.csv",
        ] {
            assert!(out.join("figures").join(figure).exists(), "{figure}");
        }

        let body = std::fs::read_to_string(out.join("tables/table1_accuracy.csv")).unwrap();
        let mut lines = body.lines();
        assert_eq!(
            lines.next().unwrap(),
            "Model,Accuracy,Precision,Recall,F1-Score"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].starts_with("Encoder,"));
        assert!(rows[1].starts_with("Generator,"));
        assert!(rows[2].starts_with("Hybrid,"));

        // report is a pure function of metrics.json: re-running changes nothing
        let before = std::fs::read(out.join("tables/table4_robustness.csv")).unwrap();
        assert_eq!(run_command(["fusecc", "report", "--config", arg]), EXIT_OK);
        let after = std::fs::read(out.join("tables/table4_robustness.csv")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn complete_local_after_train_prints_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = tiny_pipeline_config(dir.path());
        let arg = config_path.to_str().unwrap();
        assert_eq!(run_command(["fusecc", "train", "--config", arg]), EXIT_OK);
        let code = run_command([
            "fusecc",
            "complete",
            "--config",
            arg,
            "--prompt",
            "v1 = f1 (",
            "--max-new",
            "4",
        ]);
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn complete_remote_uses_stub_when_no_url() {
        // No URL anywhere → deterministic offline stub, exit 0.
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("config.json");
        std::fs::write(
            &config_path,
            serde_json::json!({
                "corpus": dir.path().join("c.jsonl"),
                "output": dir.path().join("out"),
            })
            .to_string(),
        )
        .unwrap();
        let code = run_command([
            "fusecc",
            "complete",
            "--config",
            config_path.to_str().unwrap(),
            "--prompt",
            "def add ( a , b ) :",
            "--backend",
            "remote",
        ]);
        assert_eq!(code, EXIT_OK);
    }
}
