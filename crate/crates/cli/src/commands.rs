use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use bsw_core::classifier::{
    self, probe_words, Classifier, ClassifierBackend, LocalClassifier, ModelFile, RemoteClassifier,
    RetryPolicy,
};
use bsw_core::corpus::{
    build_vocabulary, load_corpus, split_corpus, write_corpus, CorpusFormat, CorpusSchema,
    LabeledCorpus,
};
use bsw_core::detection::{
    detect_soac, detect_spcpd, load_manual_list, load_word_set, BswCandidate, DetectionConfig,
    DetectionStrategy,
};
use bsw_core::embeddings::{load_embeddings, EmbeddingTable};
use bsw_core::metrics::{
    aggregate, build_report, pauc_from_scores, roc_auc, score_documents, EvalReport, MetricError,
    ReportMetadata,
};
use bsw_core::replacement::{
    apply_strategy, generate_madlibs, MadlibsSpec, ReplacementStrategy, Resources,
};
use bsw_core::tagging::Tagger;
use bsw_core::wordnet::{load_wordnet, WordNetDb};
use serde::{Deserialize, Serialize};

use crate::config::{Metric, PipelineConfig};
use crate::output::{timestamp, OutputDir};
use crate::CliError;

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    let path = value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("`{key}` is not set")))?;
    exists(path, key)?;
    Ok(path)
}

fn exists(path: &Path, key: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{key}: {} does not exist",
            path.display()
        )))
    }
}

/// Every optional path that is set must exist.
fn check_optional_paths(config: &PipelineConfig) -> Result<(), CliError> {
    let paths = [
        ("corpus", &config.corpus),
        ("embeddings", &config.embeddings),
        ("wordnet_dir", &config.wordnet_dir),
        ("wordnet_vocab", &config.wordnet_vocab),
        ("lexicon", &config.lexicon),
        ("gazetteer", &config.gazetteer),
        ("pos_tags", &config.pos_tags),
        ("ne_tags", &config.ne_tags),
        ("abusive", &config.abusive),
        ("manual_list", &config.manual_list),
        ("bsw_list", &config.bsw_list),
        ("madlibs", &config.madlibs),
        ("model", &config.model),
        ("wordlist", &config.wordlist),
    ];
    for (key, path) in paths {
        if let Some(p) = path {
            exists(p, key)?;
        }
    }
    if config.runs == 0 {
        return Err(CliError::Config("runs must be at least 1".into()));
    }
    Ok(())
}

/// Resources the BSW step will need, checked before anything is loaded.
fn check_bsw_source(config: &PipelineConfig, spcpd_backend: bool) -> Result<(), CliError> {
    if config.bsw_list.is_some() {
        return Ok(());
    }
    match config.detection {
        DetectionStrategy::Manual => require(&config.manual_list, "manual_list").map(drop),
        DetectionStrategy::Soac => require(&config.corpus, "corpus").map(drop),
        DetectionStrategy::Spcpd if !spcpd_backend => Err(CliError::Config(
            "SPCPD detection needs a model (`model` + `embeddings`) or an `endpoint`".into(),
        )),
        DetectionStrategy::Spcpd => Ok(()),
    }
}

fn schema(config: &PipelineConfig) -> CorpusSchema {
    let mut schema = CorpusSchema::new(
        &config.text_column,
        &config.label_column,
        config.label_map(),
    );
    schema.bsw_col = config.bsw_column.clone();
    schema.pretokenized = config.pretokenized;
    schema
}

fn corpus_format(config: &PipelineConfig, path: &Path) -> CorpusFormat {
    config
        .corpus_format
        .unwrap_or_else(|| CorpusFormat::from_path(path))
}

pub(crate) fn read_corpus(config: &PipelineConfig) -> Result<LabeledCorpus, CliError> {
    let path = require(&config.corpus, "corpus")?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    Ok(load_corpus(
        path,
        corpus_format(config, path),
        &schema(config),
        &name,
    )?)
}

pub(crate) fn read_embeddings(config: &PipelineConfig) -> Result<EmbeddingTable, CliError> {
    let path = require(&config.embeddings, "embeddings")?;
    Ok(load_embeddings(path, config.embeddings_limit)?)
}

fn build_tagger(config: &PipelineConfig) -> Result<Tagger, CliError> {
    let mut tagger = Tagger::builtin();
    if let Some(p) = &config.lexicon {
        tagger = tagger.with_lexicon_file(p)?;
    }
    if let Some(p) = &config.gazetteer {
        tagger = tagger.with_gazetteer_file(p)?;
    }
    if let Some(p) = &config.pos_tags {
        tagger = tagger.with_pos_sidecar(p)?;
    }
    if let Some(p) = &config.ne_tags {
        tagger = tagger.with_ne_sidecar(p)?;
    }
    Ok(tagger)
}

pub(crate) fn detection_config(config: &PipelineConfig) -> Result<DetectionConfig, CliError> {
    let abusive = match &config.abusive {
        Some(p) => load_word_set(p)?,
        None => HashSet::new(),
    };
    Ok(DetectionConfig {
        tf_cutoff: config.tf_cutoff,
        tau: config.tau,
        catchall_class: config.catchall_class,
        abusive,
        top_n: config.top_n,
    })
}

/// Remote backend when an endpoint is set, otherwise the saved model.
pub(crate) fn saved_backend(config: &PipelineConfig) -> Result<ClassifierBackend, CliError> {
    if let Some(endpoint) = &config.endpoint {
        let retry = RetryPolicy {
            max_retries: config.retries,
            initial_backoff: Duration::from_millis(config.retry_backoff_ms),
            ..RetryPolicy::default()
        };
        let mut remote = RemoteClassifier::new(endpoint, config.qps)?.with_retry(retry);
        if let Some(header) = &config.auth_header {
            remote = remote.with_auth_header(header)?;
        }
        return Ok(ClassifierBackend::Remote(remote));
    }
    let model = require(&config.model, "model")?;
    let table = read_embeddings(config)?;
    Ok(ClassifierBackend::Local(
        ModelFile::load(model)?.into_local(&table)?,
    ))
}

fn check_saved_backend(config: &PipelineConfig) -> Result<(), CliError> {
    if config.endpoint.is_some() {
        return Ok(());
    }
    if config.model.is_none() {
        return Err(CliError::Config("needs `model` or `endpoint`".into()));
    }
    require(&config.model, "model")?;
    require(&config.embeddings, "embeddings")?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct BswFile {
    config_hash: String,
    detection: DetectionStrategy,
    candidates: Vec<BswCandidate>,
}

/// Reads a BSW list written by `detect`, a bare candidate array, or a plain
/// word list.
fn read_bsw_list(path: &Path) -> Result<Vec<BswCandidate>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(&path.display().to_string(), e))?;
    if let Ok(file) = serde_json::from_str::<BswFile>(&text) {
        return Ok(file.candidates);
    }
    if let Ok(list) = serde_json::from_str::<Vec<BswCandidate>>(&text) {
        return Ok(list);
    }
    Ok(load_manual_list(path)?)
}

fn warn_multiword(candidates: &[BswCandidate]) {
    for c in candidates.iter().filter(|c| c.multiword) {
        log::warn!(
            "BSW `{}` spans several words; it is listed but never replaced",
            c.word
        );
    }
}

/// Distinct single-token BSWs in sorted order.
fn bsw_words(candidates: &[BswCandidate]) -> Vec<String> {
    candidates
        .iter()
        .filter(|c| !c.multiword)
        .map(|c| c.word.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn vocabulary_list(corpus: &LabeledCorpus) -> Vec<String> {
    build_vocabulary(corpus)
        .iter()
        .map(|(w, _)| w.to_string())
        .collect()
}

/// Candidates from the configured source. `train` is the training split (for
/// SOAC and the SPCPD vocabulary), `backend` scores SPCPD probes.
fn find_bsws(
    config: &PipelineConfig,
    train: Option<&LabeledCorpus>,
    backend: Option<&dyn Classifier>,
) -> Result<(Vec<BswCandidate>, bool), CliError> {
    if let Some(path) = &config.bsw_list {
        let list = read_bsw_list(path)?;
        warn_multiword(&list);
        return Ok((list, false));
    }
    let det = detection_config(config)?;
    let list = match config.detection {
        DetectionStrategy::Manual => {
            let list = load_manual_list(require(&config.manual_list, "manual_list")?)?;
            warn_multiword(&list);
            list
        }
        DetectionStrategy::Soac => {
            let train =
                train.ok_or_else(|| CliError::Config("SOAC detection needs a corpus".into()))?;
            detect_soac(&build_vocabulary(train), &det)
        }
        DetectionStrategy::Spcpd => {
            let backend = backend
                .ok_or_else(|| CliError::Config("SPCPD detection needs a classifier".into()))?;
            let words = match &config.wordlist {
                Some(p) => crate::probe::read_wordlist(p)?,
                None => vocabulary_list(train.ok_or_else(|| {
                    CliError::Config("SPCPD detection needs a corpus or wordlist".into())
                })?),
            };
            detect_spcpd(backend, &words, &det, config.concurrency)?
        }
    };
    Ok((list, true))
}

fn write_bsw_files(
    out: &mut OutputDir,
    config: &PipelineConfig,
    hash: &str,
    list: &[BswCandidate],
) -> Result<(), CliError> {
    out.write_json(
        "bsw.json",
        &BswFile {
            config_hash: hash.to_string(),
            detection: config.detection,
            candidates: list.to_vec(),
        },
    )?;
    let mut text = format!("# config_hash {hash}\n");
    for c in list {
        text.push_str(&c.word);
        text.push('\n');
    }
    out.write_text("bsw.txt", &text)?;
    Ok(())
}

fn auc_on(backend: &dyn Classifier, split: &LabeledCorpus) -> Result<Option<f64>, CliError> {
    if split.is_empty() {
        return Ok(None);
    }
    let scores = score_documents(backend, split)?;
    match roc_auc(&scores, &split.labels()) {
        Ok(auc) => Ok(Some(auc)),
        Err(MetricError::SingleClass { .. }) => {
            log::warn!("{} has a single class; ROC-AUC skipped", split.name);
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Template corpus for pAUC and the words whose subgroups it measures.
struct PaucSet {
    corpus: LabeledCorpus,
    words: Vec<String>,
}

fn pauc_set(config: &PipelineConfig) -> Result<Option<PaucSet>, CliError> {
    if !config.wants(Metric::Pauc) {
        return Ok(None);
    }
    let Some(path) = &config.madlibs else {
        log::info!("pAUC requested but no `madlibs` spec is set; skipped");
        return Ok(None);
    };
    let mut spec = MadlibsSpec::load(path)?;
    if let Some(size) = config.madlibs_size {
        spec.target_size = size;
    }
    let corpus = generate_madlibs(&spec)?;
    let words = spec
        .dictionaries
        .get(&spec.bsw_slot)
        .cloned()
        .unwrap_or_default();
    Ok(Some(PaucSet { corpus, words }))
}

struct EvalContext<'a> {
    config: &'a PipelineConfig,
    hash: &'a str,
    dataset: &'a str,
    detection: String,
    test: Option<&'a LabeledCorpus>,
    bsw: &'a [String],
    pauc: Option<&'a PaucSet>,
}

impl EvalContext<'_> {
    fn report(
        &self,
        backend: &dyn Classifier,
        replacement: &str,
        seed: u64,
    ) -> Result<EvalReport, CliError> {
        let auc = match self.test {
            Some(test) => auc_on(backend, test)?.unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        let probes = probe_words(backend, self.bsw, self.config.concurrency, |_, _| {})?;
        let mut variants = self.config.pb_variants();
        if probes.is_empty() && !variants.is_empty() {
            log::warn!("no single-token BSWs; PB skipped");
            variants.clear();
        }
        let pauc = match self.pauc {
            Some(set) => {
                let scores = score_documents(backend, &set.corpus)?;
                Some(pauc_from_scores(&set.corpus, &scores, &set.words, seed)?)
            }
            None => None,
        };
        let meta = ReportMetadata {
            dataset: self.dataset.to_string(),
            detection: self.detection.clone(),
            replacement: replacement.to_string(),
            seed,
            config_hash: Some(self.hash.to_string()),
            timestamp: timestamp(self.config.timestamp),
        };
        Ok(build_report(meta, auc, &probes, &variants, pauc.as_ref())?)
    }
}

fn detection_label(config: &PipelineConfig) -> String {
    match &config.bsw_list {
        Some(p) => format!("list:{}", p.display()),
        None => config.detection.to_string(),
    }
}

fn print_row(name: &str, r: &EvalReport) {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{name:<14} roc_auc {}  pb_mean {}  pb_sym {}  pb_asym {}  pauc {}",
        cell(Some(r.roc_auc)),
        cell(r.pb_mean),
        cell(r.pb_sym),
        cell(r.pb_asym),
        cell(r.pauc)
    );
}

#[derive(Serialize)]
struct TrainReport {
    config_hash: String,
    dataset: String,
    seed: u64,
    train_size: usize,
    dev_size: usize,
    test_size: usize,
    final_loss: f64,
    dev_roc_auc: Option<f64>,
    test_roc_auc: Option<f64>,
}

pub fn train(config: &PipelineConfig) -> Result<(), CliError> {
    check_optional_paths(config)?;
    require(&config.corpus, "corpus")?;
    require(&config.embeddings, "embeddings")?;
    let seed = config.require_seed("train")?;
    let hash = config.hash();

    let corpus = read_corpus(config)?;
    let (tr, dev, te) = split_corpus(&corpus, config.split_ratios(), seed)?;
    let table = read_embeddings(config)?;
    let model = classifier::train(&tr, &table, config.train_config(seed))?;
    let clf = LocalClassifier::new(model.clone(), table)?;
    let report = TrainReport {
        config_hash: hash.clone(),
        dataset: corpus.name.clone(),
        seed,
        train_size: tr.len(),
        dev_size: dev.len(),
        test_size: te.len(),
        final_loss: model.final_loss,
        dev_roc_auc: auc_on(&clf, &dev)?,
        test_roc_auc: auc_on(&clf, &te)?,
    };

    let mut out = OutputDir::create(&config.out, "train", &hash)?;
    ModelFile::new(model, BTreeMap::new(), Some(hash.clone())).save(&out.file("model.json")?)?;
    out.write_json("train_report.json", &report)?;
    out.finish()?;
    println!(
        "trained on {} documents; dev ROC-AUC {:?}, test ROC-AUC {:?}",
        tr.len(),
        report.dev_roc_auc,
        report.test_roc_auc
    );
    Ok(())
}

pub fn detect(config: &PipelineConfig) -> Result<(), CliError> {
    check_optional_paths(config)?;
    let spcpd_backend =
        config.endpoint.is_some() || config.model.is_some() || config.embeddings.is_some();
    check_bsw_source(config, spcpd_backend)?;
    let hash = config.hash();

    let needs_corpus = match config.detection {
        DetectionStrategy::Manual => false,
        DetectionStrategy::Soac => true,
        DetectionStrategy::Spcpd => config.wordlist.is_none(),
    };
    let train_split = if needs_corpus {
        let seed = config.require_seed("detect")?;
        let corpus = read_corpus(config)?;
        Some(split_corpus(&corpus, config.split_ratios(), seed)?.0)
    } else {
        None
    };
    let backend = if config.detection == DetectionStrategy::Spcpd && config.bsw_list.is_none() {
        Some(if config.endpoint.is_none() && config.model.is_none() {
            // no saved model: train one on the training split
            let seed = config.require_seed("detect")?;
            let train = train_split.as_ref().ok_or_else(|| {
                CliError::Config("training a model for SPCPD needs a corpus".into())
            })?;
            let table = read_embeddings(config)?;
            let model = classifier::train(train, &table, config.train_config(seed))?;
            ClassifierBackend::Local(LocalClassifier::new(model, table)?)
        } else {
            saved_backend(config)?
        })
    } else {
        None
    };
    let (list, _) = find_bsws(
        config,
        train_split.as_ref(),
        backend.as_ref().map(|b| b as &dyn Classifier),
    )?;

    let mut out = OutputDir::create(&config.out, "detect", &hash)?;
    write_bsw_files(&mut out, config, &hash, &list)?;
    out.finish()?;
    for c in &list {
        match c.score {
            Some(s) => println!("{}\t{s:.6}", c.word),
            None => println!("{}", c.word),
        }
    }
    Ok(())
}

fn slug(strategy: ReplacementStrategy) -> String {
    strategy.to_string().replace(':', "-")
}

fn model_name(runs: usize, run: usize) -> String {
    if runs == 1 {
        "model.json".into()
    } else {
        format!("model-{run}.json")
    }
}

pub fn debias(config: &PipelineConfig) -> Result<(), CliError> {
    check_optional_paths(config)?;
    require(&config.corpus, "corpus")?;
    require(&config.embeddings, "embeddings")?;
    let seed = config.require_seed("debias")?;
    let needs_wordnet = config
        .strategies
        .iter()
        .any(|s| matches!(s, ReplacementStrategy::WordNet { .. }));
    if needs_wordnet {
        require(&config.wordnet_dir, "wordnet_dir")
            .map_err(|e| CliError::Config(format!("WordNet replacement: {e}")))?;
    }
    check_bsw_source(config, true)?;
    let hash = config.hash();

    let corpus = read_corpus(config)?;
    let (tr, _dev, te) = split_corpus(&corpus, config.split_ratios(), seed)?;
    let table = read_embeddings(config)?;
    let tagger = build_tagger(config)?;
    let wordnet: Option<WordNetDb> = match (&config.wordnet_dir, needs_wordnet) {
        (Some(dir), true) => Some(load_wordnet(dir)?),
        _ => None,
    };
    let wordnet_vocab: Option<HashSet<String>> = match &config.wordnet_vocab {
        Some(p) => Some(load_word_set(p)?),
        None => None,
    };
    let pauc = pauc_set(config)?;
    let seeds: Vec<u64> = (0..config.runs as u64)
        .map(|r| seed.wrapping_add(r))
        .collect();

    let biased: Vec<LocalClassifier> = seeds
        .iter()
        .map(|&s| {
            let model = classifier::train(&tr, &table, config.train_config(s))?;
            Ok(LocalClassifier::new(model, table.clone())?)
        })
        .collect::<Result<_, CliError>>()?;
    let (candidates, detected) = find_bsws(config, Some(&tr), Some(&biased[0]))?;
    let words = bsw_words(&candidates);
    let bsw_set: HashSet<String> = words.iter().cloned().collect();
    if words.is_empty() {
        log::warn!("no bias-sensitive words found; corpora are left unchanged");
    }

    let mut out = OutputDir::create(&config.out, "debias", &hash)?;
    if detected {
        write_bsw_files(&mut out, config, &hash, &candidates)?;
    }
    let ctx = EvalContext {
        config,
        hash: &hash,
        dataset: &corpus.name,
        detection: detection_label(config),
        test: Some(&te),
        bsw: &words,
        pauc: pauc.as_ref(),
    };

    let mut reports = Vec::new();
    for (run, (clf, &s)) in biased.iter().zip(&seeds).enumerate() {
        let file = ModelFile::new(clf.model().clone(), BTreeMap::new(), Some(hash.clone()));
        file.save(&out.file(&format!("biased/{}", model_name(config.runs, run)))?)?;
        reports.push(ctx.report(clf, "none", s)?);
    }
    let biased_report = aggregate(&reports)?;
    out.write_json("biased/report.json", &biased_report)?;
    print_row("biased", &biased_report);

    let resources = Resources {
        tagger: Some(&tagger),
        embeddings: Some(&table),
        wordnet: wordnet.as_ref(),
        vocab: wordnet_vocab.as_ref(),
    };
    let schema = schema(config);
    let format = corpus_format(config, config.corpus.as_deref().expect("checked"));
    for &strategy in &config.strategies {
        let name = slug(strategy);
        let debiased = apply_strategy(&tr, &bsw_set, strategy, &resources)?;
        log::info!(
            "{strategy}: {} replacements, {} occurrences unchanged",
            debiased.log.len(),
            debiased.unchanged.len()
        );
        let ext = match format {
            CorpusFormat::Csv => "csv",
            CorpusFormat::Tsv => "tsv",
        };
        write_corpus(
            &debiased.corpus,
            &out.file(&format!("{name}/train.{ext}"))?,
            format,
            &schema,
        )?;
        debiased.write_log(
            &out.file(&format!("{name}/replacements.json"))?,
            strategy,
            Some(&hash),
        )?;

        let mut injected = table.clone();
        injected.inject_all(&debiased.injected_vectors)?;
        let mut reports = Vec::new();
        for (run, &s) in seeds.iter().enumerate() {
            let model = classifier::train(&debiased.corpus, &injected, config.train_config(s))?;
            let file = ModelFile::new(
                model.clone(),
                debiased.injected_vectors.clone(),
                Some(hash.clone()),
            );
            file.save(&out.file(&format!("{name}/{}", model_name(config.runs, run)))?)?;
            let clf = LocalClassifier::new(model, injected.clone())?;
            reports.push(ctx.report(&clf, &strategy.to_string(), s)?);
        }
        let report = aggregate(&reports)?;
        out.write_json(&format!("{name}/report.json"), &report)?;
        print_row(&strategy.to_string(), &report);
    }
    out.finish()?;
    Ok(())
}

pub fn eval(config: &PipelineConfig) -> Result<(), CliError> {
    check_optional_paths(config)?;
    check_saved_backend(config)?;
    require(&config.corpus, "corpus")?;
    let seed = config.require_seed("eval")?;
    check_bsw_source(config, true)?;
    let hash = config.hash();

    let corpus = read_corpus(config)?;
    let (tr, _dev, te) = split_corpus(&corpus, config.split_ratios(), seed)?;
    let backend = saved_backend(config)?;
    let pauc = pauc_set(config)?;
    let (candidates, _) = find_bsws(config, Some(&tr), Some(&backend))?;
    let words = bsw_words(&candidates);
    let ctx = EvalContext {
        config,
        hash: &hash,
        dataset: &corpus.name,
        detection: detection_label(config),
        test: Some(&te),
        bsw: &words,
        pauc: pauc.as_ref(),
    };
    let replacement = match &config.model {
        Some(p) if config.endpoint.is_none() => format!("model:{}", p.display()),
        _ => "remote".to_string(),
    };
    let report = ctx.report(&backend, &replacement, seed)?;

    let mut out = OutputDir::create(&config.out, "eval", &hash)?;
    out.write_json("report.json", &report)?;
    out.finish()?;
    print_row("eval", &report);
    Ok(())
}

pub fn madlibs(config: &PipelineConfig) -> Result<(), CliError> {
    check_optional_paths(config)?;
    let path = require(&config.madlibs, "madlibs")?;
    let hash = config.hash();

    let mut spec = MadlibsSpec::load(path)?;
    if let Some(size) = config.madlibs_size {
        spec.target_size = size;
    }
    if let Some(seed) = config.seed {
        spec.seed = seed;
    }
    let corpus = generate_madlibs(&spec)?;
    let mut schema = schema(config);
    if schema.bsw_col.is_none() {
        schema.bsw_col = Some("bsw".into());
    }

    let mut out = OutputDir::create(&config.out, "madlibs", &hash)?;
    write_corpus(
        &corpus,
        &out.file("madlibs.csv")?,
        CorpusFormat::Csv,
        &schema,
    )?;
    out.finish()?;
    println!(
        "{} documents ({} hateful, {} neutral)",
        corpus.len(),
        corpus.count_label(bsw_core::corpus::Label::Hateful),
        corpus.count_label(bsw_core::corpus::Label::Neutral)
    );
    Ok(())
}
