//! Rewriting of bias-sensitive word occurrences in a training corpus, and
//! template-generated data for augmentation and evaluation.

mod madlibs;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Document, LabeledCorpus};
use crate::embeddings::{is_dummy_tag, EmbeddingError, EmbeddingTable};
use crate::tagging::{NeTag, PosTag, TagError, Tagger};
use crate::wordnet::{hypernym_generalize, WordNetDb};

pub use madlibs::{augment_with_templates, generate_madlibs, MadlibsSpec, Template};

#[derive(Debug, Error)]
pub enum ReplacementError {
    #[error("strategy {strategy} needs {resource}")]
    MissingResource {
        strategy: String,
        resource: &'static str,
    },
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("template `{template}` uses slot `{slot}` which has no dictionary")]
    UnknownSlot { template: String, slot: String },
    #[error("dictionary for slot `{0}` is empty")]
    EmptySlot(String),
    #[error("madlibs spec {path}:{line}: {message}")]
    Spec {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no {0} template")]
    MissingLabel(crate::corpus::Label),
    #[error("augmentation templates must all be Neutral; `{0}` is not")]
    NonNeutralTemplate(String),
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Tag(#[from] TagError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum ReplacementStrategy {
    PosTags,
    NeTags,
    Knn { k: usize, seed: u64 },
    WordNet { level: usize },
    Centroid { k: usize },
}

pub const MAX_WORDNET_LEVEL: usize = 5;
pub const DEFAULT_CENTROID_K: usize = 5;

impl ReplacementStrategy {
    pub fn validate(&self) -> Result<(), ReplacementError> {
        match *self {
            ReplacementStrategy::Knn { k: 0, .. } => {
                Err(ReplacementError::InvalidStrategy("knn needs k >= 1".into()))
            }
            ReplacementStrategy::WordNet { level } if level > MAX_WORDNET_LEVEL => {
                Err(ReplacementError::InvalidStrategy(format!(
                    "wordnet level must be 0..={MAX_WORDNET_LEVEL}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ReplacementStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplacementStrategy::PosTags => f.write_str("pos"),
            ReplacementStrategy::NeTags => f.write_str("ne"),
            ReplacementStrategy::Knn { k, seed } => write!(f, "knn:{k}:{seed}"),
            ReplacementStrategy::WordNet { level } => write!(f, "wordnet:{level}"),
            ReplacementStrategy::Centroid { k } => write!(f, "centroid:{k}"),
        }
    }
}

/// Parses `pos`, `ne`, `knn:K[:SEED]`, `wordnet:LEVEL` and `centroid[:K]`.
/// A knn seed left out defaults to 0.
impl FromStr for ReplacementStrategy {
    type Err = ReplacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize, what: &str| -> Result<u64, ReplacementError> {
            parts[i]
                .parse()
                .map_err(|_| ReplacementError::InvalidStrategy(format!("bad {what} in `{s}`")))
        };
        let strategy = match (parts[0].to_ascii_lowercase().as_str(), parts.len()) {
            ("pos" | "postags", 1) => ReplacementStrategy::PosTags,
            ("ne" | "netags", 1) => ReplacementStrategy::NeTags,
            ("knn", 2) => ReplacementStrategy::Knn {
                k: num(1, "k")? as usize,
                seed: 0,
            },
            ("knn", 3) => ReplacementStrategy::Knn {
                k: num(1, "k")? as usize,
                seed: num(2, "seed")?,
            },
            ("wordnet", 2) => ReplacementStrategy::WordNet {
                level: num(1, "level")? as usize,
            },
            ("centroid", 1) => ReplacementStrategy::Centroid {
                k: DEFAULT_CENTROID_K,
            },
            ("centroid", 2) => ReplacementStrategy::Centroid {
                k: num(1, "k")? as usize,
            },
            _ => {
                return Err(ReplacementError::InvalidStrategy(format!(
                    "unknown strategy `{s}` (pos, ne, knn:K[:SEED], wordnet:LEVEL, centroid[:K])"
                )))
            }
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// External data a strategy may need. WordNet replacement draws its
/// vocabulary from `vocab`, or from the corpus when that is absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct Resources<'a> {
    pub tagger: Option<&'a Tagger>,
    pub embeddings: Option<&'a EmbeddingTable>,
    pub wordnet: Option<&'a WordNetDb>,
    pub vocab: Option<&'a HashSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementRecord {
    pub doc_id: String,
    pub position: usize,
    pub original: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnchangedRecord {
    pub doc_id: String,
    pub position: usize,
    pub word: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedCorpus {
    pub corpus: LabeledCorpus,
    pub injected_vectors: BTreeMap<String, Vec<f64>>,
    /// One entry per rewritten token.
    pub log: Vec<ReplacementRecord>,
    /// BSW occurrences that were left as they were.
    pub unchanged: Vec<UnchangedRecord>,
}

#[derive(Serialize)]
struct LogFile<'a> {
    strategy: String,
    replacements: &'a [ReplacementRecord],
    unchanged: &'a [UnchangedRecord],
    injected_tags: Vec<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<&'a str>,
}

impl DebiasedCorpus {
    /// Writes the replacement log as JSON.
    pub fn write_log(
        &self,
        path: &Path,
        strategy: ReplacementStrategy,
        config_hash: Option<&str>,
    ) -> Result<(), ReplacementError> {
        let file = LogFile {
            strategy: strategy.to_string(),
            replacements: &self.log,
            unchanged: &self.unchanged,
            injected_tags: self.injected_vectors.keys().map(String::as_str).collect(),
            config_hash,
        };
        let json = serde_json::to_string_pretty(&file).expect("log serializes");
        std::fs::write(path, json + "\n").map_err(|source| ReplacementError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Dummy-tag spelling of a word: ASCII lowercase letters and digits are
/// upper-cased, every other character becomes `_XX_` with its hex code
/// point, so distinct words never share a tag.
pub fn encode_tag_word(word: &str) -> String {
    let mut out = String::with_capacity(word.len());
    for ch in word.chars() {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
            out.push(ch.to_ascii_uppercase());
        } else {
            out.push_str(&format!("_{:X}_", ch as u32));
        }
    }
    out
}

pub fn pos_dummy_tag(tag: PosTag) -> String {
    format!("<POS_{}>", tag.as_str())
}

pub fn ne_dummy_tag(tag: NeTag) -> String {
    format!("<NE_{}>", tag.as_str())
}

pub fn centroid_dummy_tag(word: &str, pos: PosTag) -> String {
    format!("<CENTROID_{}_{}>", encode_tag_word(word), pos.as_str())
}

// Independent stream per (seed, document, position) so a draw does not
// depend on what came before it.
fn positional_rng(seed: u64, doc_index: usize, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(doc_index as u64);
    rng.set_word_pos(position as u128 * 16);
    rng
}

enum Outcome {
    Replace(String),
    Keep(&'static str),
}

fn missing(strategy: ReplacementStrategy, resource: &'static str) -> ReplacementError {
    ReplacementError::MissingResource {
        strategy: strategy.to_string(),
        resource,
    }
}

/// Rewrites every occurrence of a word in `bsw_words` according to
/// `strategy`. Tokens that are already dummy tags are never touched.
pub fn apply_strategy(
    corpus: &LabeledCorpus,
    bsw_words: &HashSet<String>,
    strategy: ReplacementStrategy,
    resources: &Resources<'_>,
) -> Result<DebiasedCorpus, ReplacementError> {
    strategy.validate()?;
    let tagger = resources.tagger;
    let embeddings = resources.embeddings;
    match strategy {
        ReplacementStrategy::PosTags | ReplacementStrategy::NeTags if tagger.is_none() => {
            return Err(missing(strategy, "a tagger"))
        }
        ReplacementStrategy::Knn { .. } if embeddings.is_none() => {
            return Err(missing(strategy, "word embeddings"))
        }
        ReplacementStrategy::Centroid { .. } if embeddings.is_none() => {
            return Err(missing(strategy, "word embeddings"))
        }
        ReplacementStrategy::Centroid { .. } if tagger.is_none() => {
            return Err(missing(strategy, "a tagger"))
        }
        ReplacementStrategy::WordNet { .. } if resources.wordnet.is_none() => {
            return Err(missing(strategy, "a WordNet database"))
        }
        _ => {}
    }

    let corpus_vocab;
    let vocab = match (strategy, resources.vocab) {
        (ReplacementStrategy::WordNet { .. }, None) => {
            corpus_vocab = corpus.vocabulary();
            Some(&corpus_vocab)
        }
        (_, v) => v,
    };

    let mut knn_pools: HashMap<String, Option<Vec<String>>> = HashMap::new();
    let mut hypernyms: HashMap<String, Option<String>> = HashMap::new();
    let mut centroid_tags: HashMap<(String, PosTag), Option<String>> = HashMap::new();
    let mut injected: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut log = Vec::new();
    let mut unchanged = Vec::new();
    let mut documents = Vec::with_capacity(corpus.len());

    for (doc_index, doc) in corpus.documents().iter().enumerate() {
        let hits: Vec<usize> = doc
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| bsw_words.contains(t.as_str()) && !is_dummy_tag(t))
            .map(|(i, _)| i)
            .collect();
        if hits.is_empty() {
            documents.push(doc.clone());
            continue;
        }
        let pos_tags = match strategy {
            ReplacementStrategy::PosTags | ReplacementStrategy::Centroid { .. } => {
                Some(tagger.expect("checked").pos_tag(&doc.id, &doc.tokens)?)
            }
            _ => None,
        };
        let ne_tags = match strategy {
            ReplacementStrategy::NeTags => {
                Some(tagger.expect("checked").ne_tag(&doc.id, &doc.tokens)?)
            }
            _ => None,
        };

        let mut tokens = doc.tokens.clone();
        for position in hits {
            let word = doc.tokens[position].as_str();
            let outcome = match strategy {
                ReplacementStrategy::PosTags => {
                    Outcome::Replace(pos_dummy_tag(pos_tags.as_ref().expect("tagged")[position]))
                }
                ReplacementStrategy::NeTags => match ne_tags.as_ref().expect("tagged")[position] {
                    NeTag::NONE => Outcome::Keep("not a named entity"),
                    tag => Outcome::Replace(ne_dummy_tag(tag)),
                },
                ReplacementStrategy::Knn { k, seed } => {
                    let table = embeddings.expect("checked");
                    let pool = knn_pools.entry(word.to_string()).or_insert_with(|| {
                        table
                            .nearest_neighbors(word, k, &HashSet::new())
                            .ok()
                            .map(|n| {
                                std::iter::once(word.to_string())
                                    .chain(n.into_iter().map(|(w, _)| w))
                                    .collect()
                            })
                    });
                    match pool {
                        None => Outcome::Keep("not in embeddings"),
                        Some(pool) => {
                            let pick =
                                positional_rng(seed, doc_index, position).gen_range(0..pool.len());
                            if pick == 0 {
                                Outcome::Keep("drew the original word")
                            } else {
                                Outcome::Replace(pool[pick].clone())
                            }
                        }
                    }
                }
                ReplacementStrategy::WordNet { level } => {
                    let db = resources.wordnet.expect("checked");
                    let vocab = vocab.expect("set for wordnet");
                    let found = hypernyms
                        .entry(word.to_string())
                        .or_insert_with(|| hypernym_generalize(db, word, level, vocab));
                    match found {
                        Some(h) => Outcome::Replace(h.clone()),
                        None => Outcome::Keep("no hypernym in vocabulary"),
                    }
                }
                ReplacementStrategy::Centroid { k } => {
                    let pos = pos_tags.as_ref().expect("tagged")[position];
                    let key = (word.to_string(), pos);
                    if !centroid_tags.contains_key(&key) {
                        let table = embeddings.expect("checked");
                        let tag =
                            match centroid_vector(table, tagger.expect("checked"), word, pos, k)? {
                                Some(vector) => {
                                    let tag = centroid_dummy_tag(word, pos);
                                    if let Some(prev) = injected.insert(tag.clone(), vector.clone())
                                    {
                                        assert_eq!(
                                            prev, vector,
                                            "dummy tag {tag} bound to two vectors"
                                        );
                                    }
                                    Some(tag)
                                }
                                None => None,
                            };
                        centroid_tags.insert(key.clone(), tag);
                    }
                    match &centroid_tags[&key] {
                        Some(tag) => Outcome::Replace(tag.clone()),
                        None => Outcome::Keep("not in embeddings"),
                    }
                }
            };
            match outcome {
                Outcome::Replace(replacement) => {
                    log.push(ReplacementRecord {
                        doc_id: doc.id.clone(),
                        position,
                        original: word.to_string(),
                        replacement: replacement.clone(),
                    });
                    tokens[position] = replacement;
                }
                Outcome::Keep(reason) => unchanged.push(UnchangedRecord {
                    doc_id: doc.id.clone(),
                    position,
                    word: word.to_string(),
                    reason: reason.to_string(),
                }),
            }
        }
        documents.push(Document {
            tokens,
            ..doc.clone()
        });
    }

    for tag in injected.keys() {
        if embeddings.is_some_and(|t| t.contains_word(tag)) {
            return Err(EmbeddingError::TagCollision(tag.clone()).into());
        }
    }
    if !unchanged.is_empty() {
        log::warn!(
            "{} BSW occurrence(s) left unchanged under {strategy}",
            unchanged.len()
        );
    }
    Ok(DebiasedCorpus {
        corpus: LabeledCorpus::new(corpus.name.clone(), documents)?,
        injected_vectors: injected,
        log,
        unchanged,
    })
}

/// Mean of `word` and its `k` nearest neighbors whose lexicon POS matches
/// `pos` (words missing from the lexicon match anything). Falls back to the
/// plain `k` nearest neighbors when too few match. `None` when `word` has
/// no vector.
pub fn centroid_vector(
    table: &EmbeddingTable,
    tagger: &Tagger,
    word: &str,
    pos: PosTag,
    k: usize,
) -> Result<Option<Vec<f64>>, ReplacementError> {
    if !table.contains_word(word) {
        return Ok(None);
    }
    let ranked = table.ranked_neighbors(word, &HashSet::new())?;
    let mut members: Vec<&str> = ranked
        .iter()
        .map(|(w, _)| w.as_str())
        .filter(|w| tagger.lexicon_tag(w).is_none_or(|t| t == pos))
        .take(k)
        .collect();
    if members.len() < k {
        members = ranked.iter().take(k).map(|(w, _)| w.as_str()).collect();
    }
    members.insert(0, word);
    Ok(Some(table.centroid(&members)?))
}
