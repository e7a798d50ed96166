//! Logistic regression over mean word embeddings, and the backend
//! abstraction used to probe any classifier with single-word documents.

mod remote;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, LabeledCorpus};
use crate::embeddings::EmbeddingTable;

pub use remote::{RateLimiter, RemoteClassifier, RetryPolicy};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training corpus needs both classes (hateful: {hateful}, neutral: {neutral})")]
    SingleClass { hateful: usize, neutral: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model dimension {model} does not match embedding dimension {table}")]
    DimensionMismatch { model: usize, table: usize },
    #[error("remote prediction failed for `{text}` after {attempts} attempt(s): {message}")]
    Transport {
        text: String,
        attempts: u32,
        message: String,
    },
    #[error("cannot read or write model {path}: {message}")]
    ModelFile { path: PathBuf, message: String },
}

/// Mean embedding of a document.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Averages the vectors of tokens found in `table` (injected tags
/// included). Unknown tokens are skipped; no known tokens gives zeros.
pub fn featurize<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> FeatureVector {
    let mut sum = vec![0.0; table.dim()];
    let mut found = 0usize;
    for token in tokens {
        if let Some(v) = table.lookup(token.as_ref()) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            found += 1;
        }
    }
    if found > 0 {
        let n = found as f64;
        sum.iter_mut().for_each(|s| *s /= n);
    }
    FeatureVector(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Default hyperparameters; the seed has no default.
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 100,
            batch_size: 32,
            seed,
        }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ClassifierError::Config(
                "learning_rate must be positive".into(),
            ));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(ClassifierError::Config("l2 must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(ClassifierError::Config(
                "batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_config: TrainConfig,
    /// Regularized training objective after the last epoch.
    pub final_loss: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize, train_config: TrainConfig) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            train_config,
            final_loss: f64::NAN,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &FeatureVector) -> f64 {
        dot(&self.weights, features.as_slice()) + self.bias
    }

    pub fn predict_features(&self, features: &FeatureVector) -> PredictionDistribution {
        PredictionDistribution::from_p_hateful(sigmoid(self.score(features)))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Regularized logistic loss and its gradient:
/// `mean(log(1 + e^z) - y z) + l2/2 * |w|^2` with `z = w.x + b`. The bias is
/// not regularized.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    features: &[&FeatureVector],
    labels: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = features.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = dot(weights, x.as_slice()) + bias;
        loss += softplus(z) - y * z;
        let residual = sigmoid(z) - y;
        for (g, xi) in grad_w.iter_mut().zip(x.as_slice()) {
            *g += residual * xi;
        }
        grad_b += residual;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * dot(weights, weights);
    (loss, grad_w, grad_b)
}

/// Mini-batch gradient descent from zero weights with a seeded shuffle per
/// epoch. Bit-reproducible for a fixed seed and document order.
pub fn train(
    corpus: &LabeledCorpus,
    table: &EmbeddingTable,
    config: TrainConfig,
) -> Result<LinearModel, ClassifierError> {
    config.validate()?;
    let hateful = corpus.count_label(crate::corpus::Label::Hateful);
    let neutral = corpus.len() - hateful;
    if hateful == 0 || neutral == 0 {
        return Err(ClassifierError::SingleClass { hateful, neutral });
    }
    let features: Vec<FeatureVector> = corpus
        .documents()
        .iter()
        .map(|d| featurize(&d.tokens, table))
        .collect();
    let labels: Vec<f64> = corpus
        .documents()
        .iter()
        .map(|d| if d.label().is_hateful() { 1.0 } else { 0.0 })
        .collect();

    let mut model = LinearModel::zeros(table.dim(), config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut batch_x: Vec<&FeatureVector> = Vec::with_capacity(config.batch_size);
    let mut batch_y: Vec<f64> = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(&features[i]);
                batch_y.push(labels[i]);
            }
            let (_, grad_w, grad_b) =
                loss_and_gradient(&model.weights, model.bias, &batch_x, &batch_y, config.l2);
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= config.learning_rate * g;
            }
            model.bias -= config.learning_rate * grad_b;
        }
    }
    let all: Vec<&FeatureVector> = features.iter().collect();
    model.final_loss = loss_and_gradient(&model.weights, model.bias, &all, &labels, config.l2).0;
    if !model.final_loss.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(ClassifierError::Config(
            "training diverged; lower the learning rate".into(),
        ));
    }
    log::info!(
        "trained on {} documents, final loss {:.6}",
        corpus.len(),
        model.final_loss
    );
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub p_hateful: f64,
    pub p_neutral: f64,
}

impl PredictionDistribution {
    pub fn from_p_hateful(p_hateful: f64) -> Self {
        let p = p_hateful.clamp(0.0, 1.0);
        PredictionDistribution {
            p_hateful: p,
            p_neutral: 1.0 - p,
        }
    }

    /// Class probabilities indexed by `Label::index`.
    pub fn class_probabilities(&self) -> [f64; 2] {
        [self.p_neutral, self.p_hateful]
    }
}

/// Anything that can score text.
pub trait Classifier: Sync {
    fn predict(&self, text: &str) -> Result<PredictionDistribution, ClassifierError>;

    /// Scores an already tokenized document.
    fn predict_tokens(&self, tokens: &[String]) -> Result<PredictionDistribution, ClassifierError> {
        self.predict(&tokens.join(" "))
    }

    /// Scores the one-token document consisting of `word`.
    fn probe(&self, word: &str) -> Result<f64, ClassifierError> {
        Ok(self.predict_tokens(&[word.to_string()])?.p_hateful)
    }
}

/// A trained model paired with the embedding table it featurizes with.
#[derive(Debug, Clone)]
pub struct LocalClassifier {
    model: LinearModel,
    table: EmbeddingTable,
}

impl LocalClassifier {
    pub fn new(model: LinearModel, table: EmbeddingTable) -> Result<Self, ClassifierError> {
        if model.dim() != table.dim() {
            return Err(ClassifierError::DimensionMismatch {
                model: model.dim(),
                table: table.dim(),
            });
        }
        Ok(LocalClassifier { model, table })
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }
}

impl Classifier for LocalClassifier {
    fn predict(&self, text: &str) -> Result<PredictionDistribution, ClassifierError> {
        self.predict_tokens(&tokenize(text))
    }

    fn predict_tokens(&self, tokens: &[String]) -> Result<PredictionDistribution, ClassifierError> {
        Ok(self.model.predict_features(&featurize(tokens, &self.table)))
    }
}

pub enum ClassifierBackend {
    Local(LocalClassifier),
    Remote(RemoteClassifier),
}

impl Classifier for ClassifierBackend {
    fn predict(&self, text: &str) -> Result<PredictionDistribution, ClassifierError> {
        match self {
            ClassifierBackend::Local(c) => c.predict(text),
            ClassifierBackend::Remote(c) => c.predict(text),
        }
    }

    fn predict_tokens(&self, tokens: &[String]) -> Result<PredictionDistribution, ClassifierError> {
        match self {
            ClassifierBackend::Local(c) => c.predict_tokens(tokens),
            ClassifierBackend::Remote(c) => c.predict_tokens(tokens),
        }
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn predict(&self, text: &str) -> Result<PredictionDistribution, ClassifierError> {
        (**self).predict(text)
    }

    fn predict_tokens(&self, tokens: &[String]) -> Result<PredictionDistribution, ClassifierError> {
        (**self).predict_tokens(tokens)
    }
}

/// Single-word probing stopped early. `completed` holds every word scored
/// before the failure.
#[derive(Debug, Error)]
#[error("probing stopped at `{failed_word}` after {} completed word(s): {source}", completed.len())]
pub struct ProbeError {
    pub completed: Vec<(String, f64)>,
    pub failed_word: String,
    #[source]
    pub source: ClassifierError,
}

/// Scores each word as a one-token document. Results arrive through
/// `on_result` as they complete and are returned in input order.
///
/// With `concurrency > 1` several words are in flight at once; a remote
/// backend's rate limiter still serializes request starts.
pub fn probe_words<C, F>(
    backend: &C,
    words: &[String],
    concurrency: usize,
    mut on_result: F,
) -> Result<Vec<(String, f64)>, ProbeError>
where
    C: Classifier + ?Sized,
    F: FnMut(&str, f64),
{
    let workers = concurrency.clamp(1, words.len().max(1));
    let mut scores: Vec<Option<f64>> = vec![None; words.len()];
    let mut failure: Option<(usize, ClassifierError)> = None;

    if workers == 1 {
        for (i, word) in words.iter().enumerate() {
            match backend.probe(word) {
                Ok(p) => {
                    on_result(word, p);
                    scores[i] = Some(p);
                }
                Err(e) => {
                    failure = Some((i, e));
                    break;
                }
            }
        }
    } else {
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<(usize, Result<f64, ClassifierError>)>();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, stop) = (&next, &stop);
                scope.spawn(move || loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= words.len() {
                        break;
                    }
                    let result = backend.probe(&words[i]);
                    if result.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    if tx.send((i, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (i, result) in rx {
                match result {
                    Ok(p) => {
                        on_result(&words[i], p);
                        scores[i] = Some(p);
                    }
                    Err(e) => {
                        if failure.as_ref().is_none_or(|(j, _)| i < *j) {
                            failure = Some((i, e));
                        }
                    }
                }
            }
        });
    }

    let completed: Vec<(String, f64)> = words
        .iter()
        .zip(&scores)
        .filter_map(|(w, s)| s.map(|p| (w.clone(), p)))
        .collect();
    match failure {
        None => Ok(completed),
        Some((i, source)) => Err(ProbeError {
            completed,
            failed_word: words[i].clone(),
            source,
        }),
    }
}

const MODEL_FORMAT: &str = "bsw-linear-model";
const MODEL_VERSION: u32 = 1;

/// On-disk model: the linear model plus every injected dummy-tag vector it
/// was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub model: LinearModel,
    pub injected: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl ModelFile {
    pub fn new(
        model: LinearModel,
        injected: BTreeMap<String, Vec<f64>>,
        config_hash: Option<String>,
    ) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            dim: model.dim(),
            model,
            injected,
            config_hash,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let err = |message: String| ClassifierError::ModelFile {
            path: path.to_path_buf(),
            message,
        };
        let json = serde_json::to_string_pretty(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let err = |message: String| ClassifierError::ModelFile {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(err(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if file.dim != file.model.dim() {
            return Err(err("weight count does not match dim".into()));
        }
        Ok(file)
    }

    /// Builds a local classifier over `base` with this file's injected tags.
    pub fn into_local(self, base: &EmbeddingTable) -> Result<LocalClassifier, ClassifierError> {
        let mut table = base.clone();
        table
            .inject_all(&self.injected)
            .map_err(|e| ClassifierError::Config(e.to_string()))?;
        LocalClassifier::new(self.model, table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Label};
    use approx::assert_abs_diff_eq;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            2,
            vec![
                ("good".to_string(), vec![1.0, 0.0]),
                ("bad".to_string(), vec![0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    fn toy_corpus() -> LabeledCorpus {
        LabeledCorpus::new(
            "toy",
            vec![
                Document::new("0", "bad", Some(Label::Hateful)),
                Document::new("1", "good", Some(Label::Neutral)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn featurize_examples() {
        let t = table();
        assert_eq!(featurize(&["good", "bad"], &t).0, vec![0.5, 0.5]);
        assert_eq!(featurize(&["zzz", "qqq"], &t).0, vec![0.0, 0.0]);
        assert_eq!(featurize::<&str>(&[], &t).0, vec![0.0, 0.0]);
        let mut injected = t.clone();
        injected.inject("<CENTROID_X>", vec![0.2, 0.4]).unwrap();
        // mean of (1,0) and (0.2,0.4)
        assert_eq!(
            featurize(&["good", "<CENTROID_X>"], &injected).0,
            vec![0.6, 0.2]
        );
    }

    #[test]
    fn separable_corpus_trains_to_full_accuracy() {
        let t = table();
        let model = train(
            &toy_corpus(),
            &t,
            TrainConfig {
                epochs: 200,
                ..TrainConfig::with_seed(3)
            },
        )
        .unwrap();
        let clf = LocalClassifier::new(model, t).unwrap();
        assert!(clf.predict("bad").unwrap().p_hateful > 0.5);
        assert!(clf.predict("good").unwrap().p_hateful < 0.5);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let t = table();
        let a = train(&toy_corpus(), &t, TrainConfig::with_seed(11)).unwrap();
        let b = train(&toy_corpus(), &t, TrainConfig::with_seed(11)).unwrap();
        assert_eq!(
            a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
            b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        let corpus =
            LabeledCorpus::new("h", vec![Document::new("0", "bad", Some(Label::Hateful))]).unwrap();
        assert!(matches!(
            train(&corpus, &table(), TrainConfig::with_seed(1)),
            Err(ClassifierError::SingleClass {
                hateful: 1,
                neutral: 0
            })
        ));
    }

    #[test]
    fn zero_model_predicts_one_half() {
        let clf = LocalClassifier::new(LinearModel::zeros(2, TrainConfig::with_seed(0)), table())
            .unwrap();
        let p = clf.predict("anything at all").unwrap();
        assert_eq!(p.p_hateful, 0.5);
        assert_abs_diff_eq!(p.p_hateful + p.p_neutral, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_abs_diff_eq!(softplus(-800.0), 0.0, epsilon = 1e-300);
        assert_abs_diff_eq!(softplus(800.0), 800.0, epsilon = 1e-9);
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = train(&toy_corpus(), &table(), TrainConfig::with_seed(5)).unwrap();
        let mut injected = BTreeMap::new();
        injected.insert("<POS_NOUN>".to_string(), vec![0.1, 0.7]);
        let file = ModelFile::new(model, injected, Some("abc".into()));
        file.save(&path).unwrap();
        let loaded = ModelFile::load(&path).unwrap();
        assert_eq!(loaded, file);
        let clf = loaded.into_local(&table()).unwrap();
        assert_eq!(clf.table().lookup("<POS_NOUN>").unwrap(), &[0.1, 0.7]);
    }

    #[test]
    fn probe_words_reports_completed_prefix() {
        struct FailsOn(&'static str);
        impl Classifier for FailsOn {
            fn predict(&self, text: &str) -> Result<PredictionDistribution, ClassifierError> {
                if text == self.0 {
                    return Err(ClassifierError::Transport {
                        text: text.into(),
                        attempts: 1,
                        message: "boom".into(),
                    });
                }
                Ok(PredictionDistribution::from_p_hateful(0.25))
            }
        }
        let words: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut seen = Vec::new();
        let err =
            probe_words(&FailsOn("c"), &words, 1, |w, _| seen.push(w.to_string())).unwrap_err();
        assert_eq!(err.failed_word, "c");
        assert_eq!(
            err.completed
                .iter()
                .map(|c| c.0.as_str())
                .collect::<Vec<_>>(),
            vec!["a", "b"]
        );
        assert_eq!(seen, vec!["a", "b"]);

        let ok = probe_words(&FailsOn("zz"), &words, 3, |_, _| {}).unwrap();
        assert_eq!(ok.len(), 4);
        assert_eq!(ok[3].0, "d");
    }
}
