//! Command-line pipeline: train a classifier, detect bias-sensitive words,
//! rewrite them in the training data, retrain, and report the metrics.

use std::ffi::OsString;
use std::path::PathBuf;

use bsw_core::classifier::{ClassifierError, ProbeError};
use bsw_core::corpus::CorpusError;
use bsw_core::detection::DetectionError;
use bsw_core::embeddings::EmbeddingError;
use bsw_core::metrics::MetricError;
use bsw_core::replacement::ReplacementError;
use bsw_core::tagging::TagError;
use bsw_core::wordnet::WordNetError;
use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
pub mod config;
mod output;
pub mod probe;

pub use config::{Metric, PipelineConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("remote error: {0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Transport(_) => 4,
        }
    }

    pub(crate) fn data(context: &str, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {e}"))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data("corpus", e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::data("embeddings", e)
    }
}

impl From<WordNetError> for CliError {
    fn from(e: WordNetError) -> Self {
        CliError::data("wordnet", e)
    }
}

impl From<TagError> for CliError {
    fn from(e: TagError) -> Self {
        CliError::data("tagging", e)
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        CliError::data("detection", e)
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Transport { .. } => CliError::Transport(e.to_string()),
            ClassifierError::Config(_) => CliError::Config(format!("classifier: {e}")),
            _ => CliError::data("classifier", e),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e.source {
            ClassifierError::Transport { .. } => CliError::Transport(e.to_string()),
            _ => CliError::data("probe", e),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Probe(p) => p.into(),
            MetricError::Classifier(c) => c.into(),
            other => CliError::data("metrics", other),
        }
    }
}

impl From<ReplacementError> for CliError {
    fn from(e: ReplacementError) -> Self {
        match e {
            ReplacementError::MissingResource { .. } | ReplacementError::InvalidStrategy(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::data("replacement", other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bsw",
    version,
    about = "Bias-sensitive word detection and corpus de-biasing"
)]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the classifier and report dev/test ROC-AUC.
    Train,
    /// Rank bias-sensitive words (manual, soac or spcpd).
    Detect {
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Replace bias-sensitive words, retrain and compare with the biased model.
    Debias {
        /// Replacement strategy list, e.g. `centroid:5` or `wordnet:*`.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Evaluate a saved model.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generate a template evaluation corpus.
    Madlibs {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Score single words against a backend, resuming from earlier partial output.
    Probe {
        #[arg(long)]
        wordlist: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        qps: Option<f64>,
        #[arg(long)]
        concurrency: Option<usize>,
        /// `Name: value`
        #[arg(long)]
        auth_header: Option<String>,
    },
}

/// Builds the effective config: defaults, then the file, then `--set`, then
/// dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
        config.set(key.trim(), value)?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(seed) = cli.seed {
        flags.push(("seed", seed.to_string()));
    }
    if let Some(out) = &cli.out {
        flags.push(("out", out.display().to_string()));
    }
    let path = |p: &PathBuf| p.display().to_string();
    match &cli.command {
        Command::Train => {}
        Command::Detect { strategy } => {
            flags.extend(strategy.iter().map(|s| ("detection", s.clone())));
        }
        Command::Debias { strategy } => {
            flags.extend(strategy.iter().map(|s| ("strategy", s.clone())));
        }
        Command::Eval { model } => flags.extend(model.iter().map(|m| ("model", path(m)))),
        Command::Madlibs { spec, size } => {
            flags.extend(spec.iter().map(|s| ("madlibs", path(s))));
            flags.extend(size.iter().map(|s| ("madlibs_size", s.to_string())));
        }
        Command::Probe {
            wordlist,
            endpoint,
            qps,
            concurrency,
            auth_header,
        } => {
            flags.extend(wordlist.iter().map(|w| ("wordlist", path(w))));
            flags.extend(endpoint.iter().map(|e| ("endpoint", e.clone())));
            flags.extend(qps.iter().map(|q| ("qps", q.to_string())));
            flags.extend(concurrency.iter().map(|c| ("concurrency", c.to_string())));
            flags.extend(auth_header.iter().map(|a| ("auth_header", a.clone())));
        }
    }
    for (key, value) in flags {
        config.set(key, &value)?;
    }
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = resolve_config(cli)?;
    match cli.command {
        Command::Train => commands::train(&config),
        Command::Detect { .. } => commands::detect(&config),
        Command::Debias { .. } => commands::debias(&config),
        Command::Eval { .. } => commands::eval(&config),
        Command::Madlibs { .. } => commands::madlibs(&config),
        Command::Probe { .. } => probe::run(&config),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
