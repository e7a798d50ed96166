//! Flat `key = value` pipeline configuration.
//!
//! Every key may appear at most once per source; later sources (flags)
//! overwrite earlier ones (the file). Paths are taken as written, relative
//! to the working directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bsw_core::classifier::TrainConfig;
use bsw_core::corpus::{CorpusFormat, LabelMap, SplitRatios};
use bsw_core::detection::{DetectionConfig, DetectionStrategy};
use bsw_core::metrics::PinnedVariant;
use bsw_core::replacement::ReplacementStrategy;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RocAuc,
    Pb(PinnedVariant),
    Pauc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::RocAuc => "roc_auc",
            Metric::Pb(PinnedVariant::Mean) => "pb_mean",
            Metric::Pb(PinnedVariant::Sym) => "pb_sym",
            Metric::Pb(PinnedVariant::Asym) => "pb_asym",
            Metric::Pauc => "pauc",
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "roc_auc" => Ok(Metric::RocAuc),
            "pb_mean" => Ok(Metric::Pb(PinnedVariant::Mean)),
            "pb_sym" => Ok(Metric::Pb(PinnedVariant::Sym)),
            "pb_asym" => Ok(Metric::Pb(PinnedVariant::Asym)),
            "pauc" => Ok(Metric::Pauc),
            other => Err(format!(
                "unknown metric `{other}` (roc_auc, pb_mean, pb_sym, pb_asym, pauc)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub corpus_format: Option<CorpusFormat>,
    pub text_column: String,
    pub label_column: String,
    pub label_map: String,
    pub bsw_column: Option<String>,
    pub pretokenized: bool,
    pub split: String,

    pub embeddings: Option<PathBuf>,
    pub embeddings_limit: Option<usize>,
    pub wordnet_dir: Option<PathBuf>,
    pub wordnet_vocab: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub pos_tags: Option<PathBuf>,
    pub ne_tags: Option<PathBuf>,

    pub abusive: Option<PathBuf>,
    pub manual_list: Option<PathBuf>,
    pub bsw_list: Option<PathBuf>,
    pub detection: DetectionStrategy,
    pub tf_cutoff: usize,
    pub tau: f64,
    pub catchall_class: usize,
    pub top_n: usize,

    pub strategies: Vec<ReplacementStrategy>,

    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,

    pub metrics: Vec<Metric>,
    pub madlibs: Option<PathBuf>,
    pub madlibs_size: Option<usize>,

    pub seed: Option<u64>,
    pub runs: usize,
    pub timestamp: bool,

    pub model: Option<PathBuf>,
    pub wordlist: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub auth_header: Option<String>,
    pub qps: f64,
    pub concurrency: usize,
    pub retries: u32,
    pub retry_backoff_ms: u64,

    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let detection = DetectionConfig::default();
        let train = TrainConfig::with_seed(0);
        PipelineConfig {
            corpus: None,
            corpus_format: None,
            text_column: "text".into(),
            label_column: "label".into(),
            label_map: "Hateful=1 Neutral=0".into(),
            bsw_column: None,
            pretokenized: false,
            split: "0.8:0.1:0.1".into(),
            embeddings: None,
            embeddings_limit: None,
            wordnet_dir: None,
            wordnet_vocab: None,
            lexicon: None,
            gazetteer: None,
            pos_tags: None,
            ne_tags: None,
            abusive: None,
            manual_list: None,
            bsw_list: None,
            detection: DetectionStrategy::Soac,
            tf_cutoff: detection.tf_cutoff,
            tau: detection.tau,
            catchall_class: detection.catchall_class,
            top_n: detection.top_n,
            strategies: vec![ReplacementStrategy::Centroid { k: 5 }],
            learning_rate: train.learning_rate,
            l2: train.l2,
            epochs: train.epochs,
            batch_size: train.batch_size,
            metrics: vec![
                Metric::RocAuc,
                Metric::Pb(PinnedVariant::Mean),
                Metric::Pb(PinnedVariant::Sym),
                Metric::Pb(PinnedVariant::Asym),
                Metric::Pauc,
            ],
            madlibs: None,
            madlibs_size: None,
            seed: None,
            runs: 1,
            timestamp: false,
            model: None,
            wordlist: None,
            endpoint: None,
            auth_header: None,
            qps: 0.0,
            concurrency: 1,
            retries: 5,
            retry_backoff_ms: 200,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Config(format!(
            "{key}: expected a boolean, got `{value}`"
        ))),
    }
}

fn optional(value: &str) -> Option<&str> {
    (!value.is_empty()).then_some(value)
}

/// Strategy list, comma separated. `wordnet:*` expands to levels 0 through 5.
pub fn parse_strategies(value: &str) -> Result<Vec<ReplacementStrategy>, CliError> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item.eq_ignore_ascii_case("wordnet:*") {
            out.extend((0..=5).map(|level| ReplacementStrategy::WordNet { level }));
            continue;
        }
        let s: ReplacementStrategy = parse_value("strategy", item)?;
        s.validate()
            .map_err(|e| CliError::Config(format!("strategy: {e}")))?;
        out.push(s);
    }
    if out.is_empty() {
        return Err(CliError::Config("strategy: empty list".into()));
    }
    Ok(out)
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "corpus",
        "corpus_format",
        "text_column",
        "label_column",
        "label_map",
        "bsw_column",
        "pretokenized",
        "split",
        "embeddings",
        "embeddings_limit",
        "wordnet_dir",
        "wordnet_vocab",
        "lexicon",
        "gazetteer",
        "pos_tags",
        "ne_tags",
        "abusive",
        "manual_list",
        "bsw_list",
        "detection",
        "tf_cutoff",
        "tau",
        "catchall_class",
        "top_n",
        "strategy",
        "learning_rate",
        "l2",
        "epochs",
        "batch_size",
        "metrics",
        "madlibs",
        "madlibs_size",
        "seed",
        "runs",
        "timestamp",
        "model",
        "wordlist",
        "endpoint",
        "auth_header",
        "qps",
        "concurrency",
        "retries",
        "retry_backoff_ms",
        "out",
    ];

    /// Sets one key. An empty value clears an optional key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let path = |v: &str| optional(v).map(PathBuf::from);
        match key {
            "corpus" => self.corpus = path(value),
            "corpus_format" => {
                self.corpus_format = optional(value).map(|v| parse_value(key, v)).transpose()?
            }
            "text_column" => self.text_column = value.to_string(),
            "label_column" => self.label_column = value.to_string(),
            "label_map" => {
                LabelMap::parse(value).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
                self.label_map = value.to_string();
            }
            "bsw_column" => self.bsw_column = optional(value).map(str::to_string),
            "pretokenized" => self.pretokenized = parse_bool(key, value)?,
            "split" => {
                parse_value::<SplitRatios>(key, value)?;
                self.split = value.to_string();
            }
            "embeddings" => self.embeddings = path(value),
            "embeddings_limit" => {
                self.embeddings_limit = optional(value).map(|v| parse_value(key, v)).transpose()?
            }
            "wordnet_dir" => self.wordnet_dir = path(value),
            "wordnet_vocab" => self.wordnet_vocab = path(value),
            "lexicon" => self.lexicon = path(value),
            "gazetteer" => self.gazetteer = path(value),
            "pos_tags" => self.pos_tags = path(value),
            "ne_tags" => self.ne_tags = path(value),
            "abusive" => self.abusive = path(value),
            "manual_list" => self.manual_list = path(value),
            "bsw_list" => self.bsw_list = path(value),
            "detection" => self.detection = parse_value(key, value)?,
            "tf_cutoff" => self.tf_cutoff = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "catchall_class" => self.catchall_class = parse_value(key, value)?,
            "top_n" => self.top_n = parse_value(key, value)?,
            "strategy" => self.strategies = parse_strategies(value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "l2" => self.l2 = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "metrics" => {
                self.metrics = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|m| parse_value(key, m))
                    .collect::<Result<_, _>>()?
            }
            "madlibs" => self.madlibs = path(value),
            "madlibs_size" => {
                self.madlibs_size = optional(value).map(|v| parse_value(key, v)).transpose()?
            }
            "seed" => self.seed = optional(value).map(|v| parse_value(key, v)).transpose()?,
            "runs" => self.runs = parse_value(key, value)?,
            "timestamp" => self.timestamp = parse_bool(key, value)?,
            "model" => self.model = path(value),
            "wordlist" => self.wordlist = path(value),
            "endpoint" => self.endpoint = optional(value).map(str::to_string),
            "auth_header" => self.auth_header = optional(value).map(str::to_string),
            "qps" => self.qps = parse_value(key, value)?,
            "concurrency" => self.concurrency = parse_value(key, value)?,
            "retries" => self.retries = parse_value(key, value)?,
            "retry_backoff_ms" => self.retry_backoff_ms = parse_value(key, value)?,
            "out" => {
                if value.is_empty() {
                    return Err(CliError::Config("out: must not be empty".into()));
                }
                self.out = PathBuf::from(value)
            }
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are
    /// skipped; a key repeated within one text is an error.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{origin}:{}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!(
                    "{origin}:{}: key `{key}` given twice",
                    n + 1
                )));
            }
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = PipelineConfig::default();
        config.apply_text(text, "config")?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = PipelineConfig::default();
        config.apply_text(&text, &path.display().to_string())?;
        Ok(config)
    }

    fn value_of(&self, key: &str) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(|x| x.to_string()).unwrap_or_default()
        }
        fn opt_path(v: &Option<PathBuf>) -> String {
            v.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        }
        let join = |items: Vec<String>| items.join(",");
        match key {
            "corpus" => opt_path(&self.corpus),
            "corpus_format" => self
                .corpus_format
                .map(|f| match f {
                    CorpusFormat::Csv => "csv".to_string(),
                    CorpusFormat::Tsv => "tsv".to_string(),
                })
                .unwrap_or_default(),
            "text_column" => self.text_column.clone(),
            "label_column" => self.label_column.clone(),
            "label_map" => self.label_map.clone(),
            "bsw_column" => opt(&self.bsw_column),
            "pretokenized" => self.pretokenized.to_string(),
            "split" => self.split.clone(),
            "embeddings" => opt_path(&self.embeddings),
            "embeddings_limit" => opt(&self.embeddings_limit),
            "wordnet_dir" => opt_path(&self.wordnet_dir),
            "wordnet_vocab" => opt_path(&self.wordnet_vocab),
            "lexicon" => opt_path(&self.lexicon),
            "gazetteer" => opt_path(&self.gazetteer),
            "pos_tags" => opt_path(&self.pos_tags),
            "ne_tags" => opt_path(&self.ne_tags),
            "abusive" => opt_path(&self.abusive),
            "manual_list" => opt_path(&self.manual_list),
            "bsw_list" => opt_path(&self.bsw_list),
            "detection" => self.detection.to_string(),
            "tf_cutoff" => self.tf_cutoff.to_string(),
            "tau" => self.tau.to_string(),
            "catchall_class" => self.catchall_class.to_string(),
            "top_n" => self.top_n.to_string(),
            "strategy" => join(self.strategies.iter().map(|s| s.to_string()).collect()),
            "learning_rate" => self.learning_rate.to_string(),
            "l2" => self.l2.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "metrics" => join(
                self.metrics
                    .iter()
                    .map(|m| m.as_str().to_string())
                    .collect(),
            ),
            "madlibs" => opt_path(&self.madlibs),
            "madlibs_size" => opt(&self.madlibs_size),
            "seed" => opt(&self.seed),
            "runs" => self.runs.to_string(),
            "timestamp" => self.timestamp.to_string(),
            "model" => opt_path(&self.model),
            "wordlist" => opt_path(&self.wordlist),
            "endpoint" => opt(&self.endpoint),
            "auth_header" => opt(&self.auth_header),
            "qps" => self.qps.to_string(),
            "concurrency" => self.concurrency.to_string(),
            "retries" => self.retries.to_string(),
            "retry_backoff_ms" => self.retry_backoff_ms.to_string(),
            "out" => self.out.display().to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key in a fixed order; `parse(to_text())` gives back `self`.
    pub fn to_text(&self) -> String {
        let mut text = String::new();
        for key in Self::KEYS {
            let _ = writeln!(text, "{key} = {}", self.value_of(key));
        }
        text
    }

    /// SHA-256 of the canonical text without `out` and `auth_header`, which
    /// change where results go and how they are fetched but not what they are.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for key in Self::KEYS
            .iter()
            .filter(|k| !matches!(**k, "out" | "auth_header"))
        {
            hasher.update(format!("{key} = {}\n", self.value_of(key)));
        }
        format!("{:x}", hasher.finalize())
    }

    pub fn split_ratios(&self) -> SplitRatios {
        self.split.parse().expect("validated when set")
    }

    pub fn label_map(&self) -> LabelMap {
        LabelMap::parse(&self.label_map).expect("validated when set")
    }

    pub fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config(format!("{command} needs a seed (--seed or `seed =`)")))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l2: self.l2,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }

    pub fn pb_variants(&self) -> Vec<PinnedVariant> {
        self.metrics
            .iter()
            .filter_map(|m| match m {
                Metric::Pb(v) => Some(*v),
                _ => None,
            })
            .collect()
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }
}
