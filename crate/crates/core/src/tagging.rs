//! Coarse POS and named-entity tagging.
//!
//! The built-in tagger is a lexicon with suffix rules and a unigram
//! gazetteer. Tags computed by an external tool can be supplied through a
//! sidecar file instead.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TagError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sidecar has no tags for document `{0}`")]
    MissingDocument(String),
    #[error("sidecar tags for document `{doc_id}` cover {tags} tokens, document has {tokens}")]
    LengthMismatch {
        doc_id: String,
        tags: usize,
        tokens: usize,
    },
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosTag {
    NOUN,
    VERB,
    ADJ,
    ADV,
    PRON,
    DET,
    ADP,
    NUM,
    CONJ,
    PRT,
    X,
}

impl PosTag {
    pub const ALL: [PosTag; 11] = [
        PosTag::NOUN,
        PosTag::VERB,
        PosTag::ADJ,
        PosTag::ADV,
        PosTag::PRON,
        PosTag::DET,
        PosTag::ADP,
        PosTag::NUM,
        PosTag::CONJ,
        PosTag::PRT,
        PosTag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::NOUN => "NOUN",
            PosTag::VERB => "VERB",
            PosTag::ADJ => "ADJ",
            PosTag::ADV => "ADV",
            PosTag::PRON => "PRON",
            PosTag::DET => "DET",
            PosTag::ADP => "ADP",
            PosTag::NUM => "NUM",
            PosTag::CONJ => "CONJ",
            PosTag::PRT => "PRT",
            PosTag::X => "X",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str() == upper)
            .ok_or_else(|| TagError::UnknownTag(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NeTag {
    PERSON,
    DATE,
    PRODUCT,
    ORGANIZATION,
    LOCATION,
    NATIONALITY,
    NONE,
}

impl NeTag {
    pub const ALL: [NeTag; 7] = [
        NeTag::PERSON,
        NeTag::DATE,
        NeTag::PRODUCT,
        NeTag::ORGANIZATION,
        NeTag::LOCATION,
        NeTag::NATIONALITY,
        NeTag::NONE,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NeTag::PERSON => "PERSON",
            NeTag::DATE => "DATE",
            NeTag::PRODUCT => "PRODUCT",
            NeTag::ORGANIZATION => "ORGANIZATION",
            NeTag::LOCATION => "LOCATION",
            NeTag::NATIONALITY => "NATIONALITY",
            NeTag::NONE => "NONE",
        }
    }
}

impl fmt::Display for NeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NeTag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        NeTag::ALL
            .into_iter()
            .find(|t| t.as_str() == upper)
            .ok_or_else(|| TagError::UnknownTag(s.to_string()))
    }
}

// Closed-class words. Open-class words fall through to suffix rules.
#[rustfmt::skip]
const BUILTIN_LEXICON: &[(&str, PosTag)] = &[
    ("i", PosTag::PRON), ("me", PosTag::PRON), ("my", PosTag::PRON), ("mine", PosTag::PRON),
    ("you", PosTag::PRON), ("your", PosTag::PRON), ("yours", PosTag::PRON), ("ya", PosTag::PRON),
    ("he", PosTag::PRON), ("him", PosTag::PRON), ("his", PosTag::PRON), ("she", PosTag::PRON),
    ("her", PosTag::PRON), ("hers", PosTag::PRON), ("it", PosTag::PRON), ("its", PosTag::PRON),
    ("we", PosTag::PRON), ("us", PosTag::PRON), ("our", PosTag::PRON), ("ours", PosTag::PRON),
    ("they", PosTag::PRON), ("them", PosTag::PRON), ("their", PosTag::PRON), ("theirs", PosTag::PRON),
    ("yourself", PosTag::PRON), ("myself", PosTag::PRON), ("himself", PosTag::PRON),
    ("herself", PosTag::PRON), ("themselves", PosTag::PRON), ("urself", PosTag::PRON),
    ("who", PosTag::PRON), ("whom", PosTag::PRON), ("what", PosTag::PRON), ("yall", PosTag::PRON),
    ("the", PosTag::DET), ("a", PosTag::DET), ("an", PosTag::DET), ("this", PosTag::DET),
    ("that", PosTag::DET), ("these", PosTag::DET), ("those", PosTag::DET), ("some", PosTag::DET),
    ("any", PosTag::DET), ("every", PosTag::DET), ("each", PosTag::DET), ("no", PosTag::DET),
    ("all", PosTag::DET),
    ("in", PosTag::ADP), ("on", PosTag::ADP), ("at", PosTag::ADP), ("of", PosTag::ADP),
    ("for", PosTag::ADP), ("with", PosTag::ADP), ("from", PosTag::ADP), ("by", PosTag::ADP),
    ("about", PosTag::ADP), ("into", PosTag::ADP), ("over", PosTag::ADP), ("under", PosTag::ADP),
    ("after", PosTag::ADP), ("before", PosTag::ADP), ("like", PosTag::ADP), ("than", PosTag::ADP),
    ("and", PosTag::CONJ), ("or", PosTag::CONJ), ("but", PosTag::CONJ), ("nor", PosTag::CONJ),
    ("so", PosTag::CONJ), ("because", PosTag::CONJ), ("if", PosTag::CONJ), ("while", PosTag::CONJ),
    ("to", PosTag::PRT), ("not", PosTag::PRT), ("up", PosTag::PRT), ("off", PosTag::PRT),
    ("out", PosTag::PRT),
    ("is", PosTag::VERB), ("are", PosTag::VERB), ("was", PosTag::VERB), ("were", PosTag::VERB),
    ("be", PosTag::VERB), ("been", PosTag::VERB), ("am", PosTag::VERB), ("do", PosTag::VERB),
    ("does", PosTag::VERB), ("did", PosTag::VERB), ("have", PosTag::VERB), ("has", PosTag::VERB),
    ("had", PosTag::VERB), ("get", PosTag::VERB), ("got", PosTag::VERB), ("go", PosTag::VERB),
    ("can", PosTag::VERB), ("will", PosTag::VERB), ("would", PosTag::VERB), ("should", PosTag::VERB),
    ("could", PosTag::VERB), ("must", PosTag::VERB), ("may", PosTag::VERB), ("wanna", PosTag::VERB),
    ("gotta", PosTag::VERB), ("gonna", PosTag::VERB), ("cant", PosTag::VERB), ("dont", PosTag::VERB),
    ("very", PosTag::ADV), ("too", PosTag::ADV), ("just", PosTag::ADV), ("never", PosTag::ADV),
    ("always", PosTag::ADV), ("here", PosTag::ADV), ("there", PosTag::ADV), ("now", PosTag::ADV),
    ("gay", PosTag::ADJ), ("straight", PosTag::ADJ), ("good", PosTag::ADJ), ("bad", PosTag::ADJ),
    ("old", PosTag::ADJ), ("young", PosTag::ADJ), ("black", PosTag::ADJ), ("white", PosTag::ADJ),
    ("great", PosTag::ADJ), ("terrible", PosTag::ADJ), ("stupid", PosTag::ADJ),
    ("lol", PosTag::X), ("yo", PosTag::X), ("yeah", PosTag::X),
];

const SUFFIX_RULES: &[(&str, PosTag)] = &[
    ("ing", PosTag::VERB),
    ("ed", PosTag::VERB),
    ("ly", PosTag::ADV),
    ("ous", PosTag::ADJ),
    ("ful", PosTag::ADJ),
    ("ish", PosTag::ADJ),
];

// A suffix only fires when at least this many characters precede it, so
// short words such as "red" or "king" are left to the fallback.
const MIN_STEM: usize = 2;

fn is_numeric(token: &str) -> bool {
    token.chars().any(|c| c.is_ascii_digit())
        && token
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | ':' | '-' | '/'))
}

fn rule_tag(token: &str) -> PosTag {
    if token.starts_with('@') {
        return PosTag::NOUN;
    }
    if is_numeric(token) {
        return PosTag::NUM;
    }
    let len = token.chars().count();
    for (suffix, tag) in SUFFIX_RULES {
        if token.ends_with(suffix) && len >= suffix.len() + MIN_STEM {
            return *tag;
        }
    }
    PosTag::NOUN
}

#[derive(Debug, Clone, Default)]
struct Sidecar<T> {
    rows: HashMap<String, Vec<T>>,
}

impl<T: FromStr<Err = TagError> + Copy> Sidecar<T> {
    fn load(path: &Path) -> Result<Self, TagError> {
        let mut rows = HashMap::new();
        for (line_no, line) in read_lines(path)? {
            let (doc_id, tags) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            let tags = tags
                .split_whitespace()
                .map(T::from_str)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TagError::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            rows.insert(doc_id.to_string(), tags);
        }
        Ok(Sidecar { rows })
    }

    fn tags(&self, doc_id: &str, tokens: &[String]) -> Result<Vec<T>, TagError> {
        let tags = self
            .rows
            .get(doc_id)
            .ok_or_else(|| TagError::MissingDocument(doc_id.to_string()))?;
        if tags.len() != tokens.len() {
            return Err(TagError::LengthMismatch {
                doc_id: doc_id.to_string(),
                tags: tags.len(),
                tokens: tokens.len(),
            });
        }
        Ok(tags.clone())
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, TagError> {
    let io_err = |source| TagError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn load_word_tags<T: FromStr<Err = TagError>>(path: &Path) -> Result<HashMap<String, T>, TagError> {
    let mut map = HashMap::new();
    for (line_no, line) in read_lines(path)? {
        let malformed = |message: String| TagError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let (word, tag) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected word<TAB>TAG".into()))?;
        let tag = tag.parse::<T>().map_err(|e| malformed(e.to_string()))?;
        map.insert(word.trim().to_lowercase(), tag);
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaggerKind {
    BuiltinLexicon,
    SidecarFile,
}

/// Deterministic POS and NE tagger.
#[derive(Debug, Clone)]
pub struct Tagger {
    lexicon: HashMap<String, PosTag>,
    gazetteer: HashMap<String, NeTag>,
    pos_sidecar: Option<Sidecar<PosTag>>,
    ne_sidecar: Option<Sidecar<NeTag>>,
}

impl Default for Tagger {
    fn default() -> Self {
        Tagger::builtin()
    }
}

impl Tagger {
    pub fn builtin() -> Self {
        Tagger {
            lexicon: BUILTIN_LEXICON
                .iter()
                .map(|(w, t)| (w.to_string(), *t))
                .collect(),
            gazetteer: HashMap::new(),
            pos_sidecar: None,
            ne_sidecar: None,
        }
    }

    pub fn kind(&self) -> TaggerKind {
        if self.pos_sidecar.is_some() || self.ne_sidecar.is_some() {
            TaggerKind::SidecarFile
        } else {
            TaggerKind::BuiltinLexicon
        }
    }

    /// Merges a `word<TAB>POS` file over the built-in lexicon.
    pub fn with_lexicon_file(mut self, path: &Path) -> Result<Self, TagError> {
        self.lexicon.extend(load_word_tags::<PosTag>(path)?);
        Ok(self)
    }

    /// Loads a `word<TAB>NETAG` gazetteer.
    pub fn with_gazetteer_file(mut self, path: &Path) -> Result<Self, TagError> {
        self.gazetteer.extend(load_word_tags::<NeTag>(path)?);
        Ok(self)
    }

    pub fn with_gazetteer<I, S>(mut self, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, NeTag)>,
        S: Into<String>,
    {
        self.gazetteer
            .extend(entries.into_iter().map(|(w, t)| (w.into(), t)));
        self
    }

    pub fn with_lexicon<I, S>(mut self, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, PosTag)>,
        S: Into<String>,
    {
        self.lexicon
            .extend(entries.into_iter().map(|(w, t)| (w.into(), t)));
        self
    }

    /// `doc_id<TAB>TAG TAG ...` lines of precomputed POS tags.
    pub fn with_pos_sidecar(mut self, path: &Path) -> Result<Self, TagError> {
        self.pos_sidecar = Some(Sidecar::load(path)?);
        Ok(self)
    }

    pub fn with_ne_sidecar(mut self, path: &Path) -> Result<Self, TagError> {
        self.ne_sidecar = Some(Sidecar::load(path)?);
        Ok(self)
    }

    /// Lexicon entry for a word, if any.
    pub fn lexicon_tag(&self, word: &str) -> Option<PosTag> {
        self.lexicon.get(word).copied()
    }

    /// Context-free tag of a single word.
    pub fn pos_tag_word(&self, word: &str) -> PosTag {
        self.lexicon_tag(word).unwrap_or_else(|| rule_tag(word))
    }

    pub fn ne_tag_word(&self, word: &str) -> NeTag {
        match self.gazetteer.get(word) {
            Some(tag) => *tag,
            None if word.starts_with('@') && word.len() > 1 => NeTag::PERSON,
            None => NeTag::NONE,
        }
    }

    /// One tag per token. With a POS sidecar, tags come from the row for
    /// `doc_id`.
    pub fn pos_tag(&self, doc_id: &str, tokens: &[String]) -> Result<Vec<PosTag>, TagError> {
        match &self.pos_sidecar {
            Some(sidecar) => sidecar.tags(doc_id, tokens),
            None => Ok(tokens.iter().map(|t| self.pos_tag_word(t)).collect()),
        }
    }

    pub fn ne_tag(&self, doc_id: &str, tokens: &[String]) -> Result<Vec<NeTag>, TagError> {
        match &self.ne_sidecar {
            Some(sidecar) => sidecar.tags(doc_id, tokens),
            None => Ok(tokens.iter().map(|t| self.ne_tag_word(t)).collect()),
        }
    }
}
