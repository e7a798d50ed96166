//! Labeled short-text corpora: loading, tokenization, vocabulary statistics
//! and deterministic splitting.
//!
//! Tokenization happens exactly once, here. Every downstream stage works on
//! the token lists stored in [`Document`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("schema error: column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("invalid label map: {0}")]
    LabelMap(String),
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` has no label")]
    Unlabeled(String),
    #[error("invalid split: {0}")]
    Split(String),
}

/// Binary class. `Neutral` is index 0, `Hateful` is index 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Neutral,
    Hateful,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Neutral => 0,
            Label::Hateful => 1,
        }
    }

    pub fn is_hateful(self) -> bool {
        self == Label::Hateful
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Neutral => "Neutral",
            Label::Hateful => "Hateful",
        })
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hateful" => Ok(Label::Hateful),
            "neutral" => Ok(Label::Neutral),
            other => Err(CorpusError::LabelMap(format!("unknown label `{other}`"))),
        }
    }
}

/// Splits text into lowercase tokens.
///
/// Whitespace separates tokens. Leading and trailing non-alphanumeric
/// characters are stripped, except that a leading `@` or `#` survives so
/// mentions and hashtags stay distinct words.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    raw_text
        .split_whitespace()
        .filter_map(|piece| {
            let lowered = piece.to_lowercase();
            let keep_marker = lowered.starts_with('@') || lowered.starts_with('#');
            let body = lowered
                .trim_start_matches(|c: char| !c.is_alphanumeric())
                .trim_end_matches(|c: char| !c.is_alphanumeric());
            if body.is_empty() {
                return None;
            }
            if keep_marker {
                let marker = &lowered[..1];
                Some(format!("{marker}{body}"))
            } else {
                Some(body.to_string())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub label: Option<Label>,
    /// Bias-sensitive word this document was generated around, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bsw: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, label: Option<Label>) -> Self {
        let raw_text = raw_text.into();
        let tokens = tokenize(&raw_text);
        Document {
            id: id.into(),
            raw_text,
            tokens,
            label,
            bsw: None,
        }
    }

    /// A document whose tokens are taken verbatim from whitespace-separated
    /// text. Used for corpora that were written back after rewriting and
    /// already carry dummy tags.
    pub fn pretokenized(
        id: impl Into<String>,
        raw_text: impl Into<String>,
        label: Option<Label>,
    ) -> Self {
        let raw_text = raw_text.into();
        let tokens = raw_text.split_whitespace().map(str::to_string).collect();
        Document {
            id: id.into(),
            raw_text,
            tokens,
            label,
            bsw: None,
        }
    }

    pub fn with_bsw(mut self, bsw: impl Into<String>) -> Self {
        self.bsw = Some(bsw.into());
        self
    }

    pub fn label(&self) -> Label {
        self.label
            .expect("labeled corpus documents always carry a label")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub name: String,
    documents: Vec<Document>,
}

impl LabeledCorpus {
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.label.is_none() {
                return Err(CorpusError::Unlabeled(doc.id.clone()));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(LabeledCorpus {
            name: name.into(),
            documents,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.documents
            .iter()
            .filter(|d| d.label == Some(label))
            .count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.documents.iter().map(Document::label).collect()
    }

    /// Distinct tokens across all documents.
    pub fn vocabulary(&self) -> HashSet<String> {
        self.documents
            .iter()
            .flat_map(|d| d.tokens.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Tsv,
}

impl CorpusFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            CorpusFormat::Csv => b',',
            CorpusFormat::Tsv => b'\t',
        }
    }

    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Csv,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(CorpusFormat::Csv),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(CorpusError::LabelMap(format!(
                "unknown corpus format `{other}`"
            ))),
        }
    }
}

/// Maps raw dataset label values onto [`Label`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    values: BTreeMap<String, Label>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, raw: impl Into<String>, label: Label) -> &mut Self {
        self.values.insert(raw.into(), label);
        self
    }

    pub fn get(&self, raw: &str) -> Option<Label> {
        self.values.get(raw.trim()).copied()
    }

    /// Parses `Hateful=v1,v2 Neutral=v3`. Groups are separated by whitespace
    /// or `;`.
    pub fn parse(spec: &str) -> Result<Self, CorpusError> {
        let mut map = LabelMap::new();
        for group in spec.split(|c: char| c.is_whitespace() || c == ';') {
            if group.is_empty() {
                continue;
            }
            let (label, values) = group.split_once('=').ok_or_else(|| {
                CorpusError::LabelMap(format!("expected LABEL=values, got `{group}`"))
            })?;
            let label: Label = label.parse()?;
            for value in values.split(',').filter(|v| !v.is_empty()) {
                if let Some(prev) = map.values.insert(value.to_string(), label) {
                    if prev != label {
                        return Err(CorpusError::LabelMap(format!(
                            "value `{value}` mapped to both {prev} and {label}"
                        )));
                    }
                }
            }
        }
        if map.values.is_empty() {
            return Err(CorpusError::LabelMap("empty label map".into()));
        }
        Ok(map)
    }

    /// Inverse of [`LabelMap::parse`].
    pub fn to_spec(&self) -> String {
        let mut groups = Vec::new();
        for label in [Label::Hateful, Label::Neutral] {
            let values: Vec<&str> = self
                .values
                .iter()
                .filter(|(_, l)| **l == label)
                .map(|(v, _)| v.as_str())
                .collect();
            if !values.is_empty() {
                groups.push(format!("{label}={}", values.join(",")));
            }
        }
        groups.join(" ")
    }

    /// The first raw value mapped to `label`, used when writing corpora back.
    pub fn raw_for(&self, label: Label) -> Option<&str> {
        self.values
            .iter()
            .find(|(_, l)| **l == label)
            .map(|(v, _)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct CorpusSchema {
    pub text_col: String,
    pub label_col: String,
    pub label_map: LabelMap,
    /// Optional column naming the bias-sensitive word a row was built around.
    pub bsw_col: Option<String>,
    /// Split text on whitespace only instead of running the tokenizer.
    pub pretokenized: bool,
}

impl CorpusSchema {
    pub fn new(text_col: &str, label_col: &str, label_map: LabelMap) -> Self {
        CorpusSchema {
            text_col: text_col.to_string(),
            label_col: label_col.to_string(),
            label_map,
            bsw_col: None,
            pretokenized: false,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CorpusError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
}

/// Reads a delimited file with a header row. Document ids are
/// `<name>:<row-index>` with zero-based data-row indices.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    schema: &CorpusSchema,
    name: &str,
) -> Result<LabeledCorpus, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut builder = csv::ReaderBuilder::new();
    builder.delimiter(format.delimiter()).flexible(false);
    if format == CorpusFormat::Tsv {
        builder.quoting(false);
    }
    let mut reader = builder.from_reader(file);
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let text_idx = column(&headers, &schema.text_col)?;
    let label_idx = column(&headers, &schema.label_col)?;
    let bsw_idx = schema
        .bsw_col
        .as_deref()
        .map(|c| column(&headers, c))
        .transpose()?;

    let mut documents = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let raw_label = record.get(label_idx).unwrap_or_default();
        let label = schema
            .label_map
            .get(raw_label)
            .ok_or_else(|| CorpusError::Row {
                row,
                message: format!("label value `{raw_label}` is not in the label map"),
            })?;
        let text = record.get(text_idx).unwrap_or_default();
        let id = format!("{name}:{row}");
        let mut doc = if schema.pretokenized {
            Document::pretokenized(id, text, Some(label))
        } else {
            Document::new(id, text, Some(label))
        };
        if let Some(idx) = bsw_idx {
            let value = record.get(idx).unwrap_or_default().trim();
            if !value.is_empty() {
                doc.bsw = Some(value.to_lowercase());
            }
        }
        documents.push(doc);
    }
    LabeledCorpus::new(name, documents)
}

/// Writes a corpus back in the given schema. The text column holds the
/// documents' tokens joined by single spaces so rewritten tokens survive.
pub fn write_corpus(
    corpus: &LabeledCorpus,
    path: &Path,
    format: CorpusFormat,
    schema: &CorpusSchema,
) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut builder = csv::WriterBuilder::new();
    builder.delimiter(format.delimiter());
    if format == CorpusFormat::Tsv {
        builder.quote_style(csv::QuoteStyle::Never);
    }
    let mut writer = builder.from_writer(file);
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut header = vec![schema.text_col.as_str(), schema.label_col.as_str()];
    if let Some(col) = &schema.bsw_col {
        header.push(col);
    }
    writer.write_record(&header).map_err(csv_err)?;
    for doc in corpus.documents() {
        let label = doc.label();
        let raw_label = schema
            .label_map
            .raw_for(label)
            .map(str::to_string)
            .unwrap_or_else(|| label.to_string());
        let text = doc.tokens.join(" ");
        let mut record = vec![text, raw_label];
        if schema.bsw_col.is_some() {
            record.push(doc.bsw.clone().unwrap_or_default());
        }
        writer.write_record(&record).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordStats {
    pub tf: usize,
    pub df: usize,
    pub df_pos: usize,
    pub df_neg: usize,
}

/// Per-word term and document frequencies, split by class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VocabularyStats {
    words: BTreeMap<String, WordStats>,
}

impl VocabularyStats {
    pub fn from_map(words: BTreeMap<String, WordStats>) -> Self {
        VocabularyStats { words }
    }

    pub fn get(&self, word: &str) -> Option<&WordStats> {
        self.words.get(word)
    }

    /// Iterates in lexicographic word order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &WordStats)> {
        self.words.iter().map(|(w, s)| (w.as_str(), s))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }
}

pub fn build_vocabulary(corpus: &LabeledCorpus) -> VocabularyStats {
    let mut words: BTreeMap<String, WordStats> = BTreeMap::new();
    let mut in_doc: HashMap<&str, usize> = HashMap::new();
    for doc in corpus.documents() {
        in_doc.clear();
        for token in &doc.tokens {
            *in_doc.entry(token.as_str()).or_default() += 1;
        }
        for (token, count) in &in_doc {
            let stats = words.entry((*token).to_string()).or_default();
            stats.tf += count;
            stats.df += 1;
            match doc.label() {
                Label::Hateful => stats.df_pos += 1,
                Label::Neutral => stats.df_neg += 1,
            }
        }
    }
    VocabularyStats { words }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Self {
        SplitRatios { train, dev, test }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CorpusError::Split(format!(
                "ratios must be non-negative: {self:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Split(format!(
                "ratios must sum to 1: {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios::new(0.8, 0.1, 0.1)
    }
}

impl FromStr for SplitRatios {
    type Err = CorpusError;

    /// Accepts `8:1:1` style weights or `0.8,0.1,0.1` fractions.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split([':', ','])
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CorpusError::Split(format!("cannot parse ratios `{s}`: {e}")))?;
        if parts.len() != 3 {
            return Err(CorpusError::Split(format!(
                "expected three ratios, got `{s}`"
            )));
        }
        let total: f64 = parts.iter().sum();
        if total <= 0.0 {
            return Err(CorpusError::Split(format!(
                "ratios must be positive: `{s}`"
            )));
        }
        Ok(SplitRatios::new(
            parts[0] / total,
            parts[1] / total,
            parts[2] / total,
        ))
    }
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.dev, self.test)
    }
}

/// Sizes for dev and test are `floor(n * ratio)`; train takes the rest.
pub fn split_sizes(n: usize, ratios: SplitRatios) -> (usize, usize, usize) {
    let dev = (n as f64 * ratios.dev).floor() as usize;
    let test = (n as f64 * ratios.test).floor() as usize;
    (n - dev - test, dev, test)
}

pub fn split_corpus(
    corpus: &LabeledCorpus,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(LabeledCorpus, LabeledCorpus, LabeledCorpus), CorpusError> {
    ratios.validate()?;
    let nonzero = [ratios.train, ratios.dev, ratios.test]
        .iter()
        .filter(|r| **r > 0.0)
        .count();
    if corpus.len() < nonzero {
        return Err(CorpusError::Split(format!(
            "{} documents cannot fill {nonzero} non-empty splits",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_dev, _) = split_sizes(corpus.len(), ratios);
    let take = |range: &[usize]| -> Vec<Document> {
        range.iter().map(|&i| corpus.documents[i].clone()).collect()
    };
    let train = take(&order[..n_train]);
    let dev = take(&order[n_train..n_train + n_dev]);
    let test = take(&order[n_train + n_dev..]);
    Ok((
        LabeledCorpus::new(format!("{}/train", corpus.name), train)?,
        LabeledCorpus::new(format!("{}/dev", corpus.name), dev)?,
        LabeledCorpus::new(format!("{}/test", corpus.name), test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn doc(id: &str, text: &str, label: Label) -> Document {
        Document::new(id, text, Some(label))
    }

    fn toxic_map() -> LabelMap {
        LabelMap::parse("Hateful=toxic Neutral=ok").unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Kat is a woman"), vec!["kat", "is", "a", "woman"]);
        assert_eq!(tokenize("rt @ABC: hello!"), vec!["rt", "@abc", "hello"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("#Love it... ???"), vec!["#love", "it"]);
        assert_eq!(tokenize("<POS_NOUN>"), vec!["pos_noun"]);
        assert_eq!(tokenize("don't"), vec!["don't"]);
    }

    #[test]
    fn load_tsv_with_label_map() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "text\tlabel\nyou are bad\ttoxic\nso bad\ttoxic\nnice day\tok"
        )
        .unwrap();
        let schema = CorpusSchema::new("text", "label", toxic_map());
        let corpus = load_corpus(f.path(), CorpusFormat::Tsv, &schema, "toy").unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.count_label(Label::Hateful), 2);
        assert_eq!(corpus.documents()[2].id, "toy:2");
    }

    #[test]
    fn unmappable_label_cites_row() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "text\tlabel\na\ttoxic\nb\tok\nc\tspam").unwrap();
        let schema = CorpusSchema::new("text", "label", toxic_map());
        let err = load_corpus(f.path(), CorpusFormat::Tsv, &schema, "toy").unwrap_err();
        match err {
            CorpusError::Row { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("spam"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "tweet,class\nhi,ok").unwrap();
        let schema = CorpusSchema::new("text", "class", toxic_map());
        let err = load_corpus(f.path(), CorpusFormat::Csv, &schema, "toy").unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(ref c) if c == "text"));
    }

    #[test]
    fn csv_quoted_fields() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "text,label\n\"hello, \"\"world\"\"\",ok").unwrap();
        let schema = CorpusSchema::new("text", "label", toxic_map());
        let corpus = load_corpus(f.path(), CorpusFormat::Csv, &schema, "q").unwrap();
        assert_eq!(corpus.documents()[0].tokens, vec!["hello", "world"]);
    }

    #[test]
    fn label_map_round_trip() {
        let map = LabelMap::parse("Hateful=hateful,offensive Neutral=neither").unwrap();
        assert_eq!(map.get("offensive"), Some(Label::Hateful));
        assert_eq!(LabelMap::parse(&map.to_spec()).unwrap(), map);
        assert!(LabelMap::parse("Hateful=a Neutral=a").is_err());
    }

    #[test]
    fn vocabulary_hand_counts() {
        let corpus = LabeledCorpus::new(
            "v",
            vec![
                doc("0", "a a b", Label::Hateful),
                doc("1", "b c", Label::Neutral),
            ],
        )
        .unwrap();
        let vocab = build_vocabulary(&corpus);
        let a = vocab.get("a").unwrap();
        assert_eq!((a.tf, a.df, a.df_pos, a.df_neg), (2, 1, 1, 0));
        let b = vocab.get("b").unwrap();
        assert_eq!((b.tf, b.df, b.df_pos, b.df_neg), (2, 2, 1, 1));
        let words: Vec<&str> = vocab.iter().map(|(w, _)| w).collect();
        assert_eq!(words, vec!["a", "b", "c"]);
    }

    #[test]
    fn empty_document_gives_empty_vocabulary() {
        let corpus = LabeledCorpus::new("e", vec![doc("0", "", Label::Neutral)]).unwrap();
        assert!(build_vocabulary(&corpus).is_empty());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let r = SplitRatios::default();
        assert_eq!(split_sizes(10, r), (8, 1, 1));
        assert_eq!(split_sizes(24_783, r), (19_827, 2_478, 2_478));
    }

    #[test]
    fn split_is_deterministic() {
        let docs = (0..10)
            .map(|i| {
                doc(
                    &i.to_string(),
                    "x",
                    if i % 2 == 0 {
                        Label::Hateful
                    } else {
                        Label::Neutral
                    },
                )
            })
            .collect();
        let corpus = LabeledCorpus::new("s", docs).unwrap();
        let a = split_corpus(&corpus, SplitRatios::default(), 7).unwrap();
        let b = split_corpus(&corpus, SplitRatios::default(), 7).unwrap();
        assert_eq!((a.0.len(), a.1.len(), a.2.len()), (8, 1, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_tiny_corpus_and_bad_ratios() {
        let corpus = LabeledCorpus::new(
            "t",
            vec![doc("0", "x", Label::Hateful), doc("1", "y", Label::Neutral)],
        )
        .unwrap();
        assert!(split_corpus(&corpus, SplitRatios::default(), 1).is_err());
        assert!(split_corpus(&corpus, SplitRatios::new(0.5, 0.5, 0.5), 1).is_err());
        assert!(split_corpus(&corpus, SplitRatios::new(0.5, 0.5, 0.0), 1).is_ok());
    }

    #[test]
    fn ratio_parsing() {
        let r: SplitRatios = "8:1:1".parse().unwrap();
        assert!((r.train - 0.8).abs() < 1e-12);
        assert!("8:1".parse::<SplitRatios>().is_err());
    }

    #[test]
    fn corpus_rejects_duplicates_and_unlabeled() {
        let dup = LabeledCorpus::new(
            "d",
            vec![doc("0", "x", Label::Hateful), doc("0", "y", Label::Neutral)],
        );
        assert!(matches!(dup, Err(CorpusError::DuplicateId(_))));
        let unl = LabeledCorpus::new("u", vec![Document::new("0", "x", None)]);
        assert!(matches!(unl, Err(CorpusError::Unlabeled(_))));
    }
}
