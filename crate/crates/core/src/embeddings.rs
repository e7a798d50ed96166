//! Word-embedding tables loaded from whitespace-separated text files, with
//! exact cosine k-NN and injected dummy-tag vectors.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read embeddings {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("word `{0}` not found in embedding table")]
    NotFound(String),
    #[error("unresolvable words: {0:?}")]
    Unresolvable(Vec<String>),
    #[error("invalid dummy tag `{0}`: expected <[A-Z0-9_]+>")]
    InvalidTag(String),
    #[error("dummy tag `{0}` collides with a vocabulary word")]
    TagCollision(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
struct WordVectors {
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

/// Word vectors plus a separate key space of injected dummy tags.
///
/// The word entries sit behind an `Arc`, so cloning a table to give it a
/// different set of injected tags does not copy the vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    entries: Arc<WordVectors>,
    injected: BTreeMap<String, Vec<f64>>,
}

/// True when `tag` has the form `<[A-Z0-9_]+>`.
pub fn is_dummy_tag(tag: &str) -> bool {
    tag.len() > 2
        && tag.starts_with('<')
        && tag.ends_with('>')
        && tag[1..tag.len() - 1]
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl EmbeddingTable {
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(EmbeddingError::Invalid("dimension must be positive".into()));
        }
        let mut table = WordVectors::default();
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    actual: vector.len(),
                });
            }
            if table.index.contains_key(&word) {
                continue;
            }
            table.index.insert(word.clone(), table.words.len());
            table.words.push(word);
            table.vectors.push(vector);
        }
        Ok(EmbeddingTable {
            dim,
            entries: Arc::new(table),
            injected: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of word entries, not counting injected tags.
    pub fn len(&self) -> usize {
        self.entries.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.words.iter().map(String::as_str)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.entries.index.contains_key(word)
    }

    /// Injected tags take precedence over word entries.
    pub fn lookup(&self, key: &str) -> Option<&[f64]> {
        if let Some(v) = self.injected.get(key) {
            return Some(v);
        }
        self.entries
            .index
            .get(key)
            .map(|&i| self.entries.vectors[i].as_slice())
    }

    pub fn injected(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.injected
    }

    pub fn inject(&mut self, tag: &str, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if !is_dummy_tag(tag) {
            return Err(EmbeddingError::InvalidTag(tag.to_string()));
        }
        if self.entries.index.contains_key(tag) {
            return Err(EmbeddingError::TagCollision(tag.to_string()));
        }
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        self.injected.insert(tag.to_string(), vector);
        Ok(())
    }

    pub fn inject_all<'a, I>(&mut self, tags: I) -> Result<(), EmbeddingError>
    where
        I: IntoIterator<Item = (&'a String, &'a Vec<f64>)>,
    {
        for (tag, vector) in tags {
            self.inject(tag, vector.clone())?;
        }
        Ok(())
    }

    /// Top-`k` entries by cosine similarity to `word`, excluding the word
    /// itself and `exclude`. Equal similarities are ordered by word.
    pub fn nearest_neighbors(
        &self,
        word: &str,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<(String, f64)>, EmbeddingError> {
        let mut ranked = self.ranked_neighbors(word, exclude)?;
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Every other entry ranked by similarity to `word`.
    pub fn ranked_neighbors(
        &self,
        word: &str,
        exclude: &HashSet<String>,
    ) -> Result<Vec<(String, f64)>, EmbeddingError> {
        let &query_idx = self
            .entries
            .index
            .get(word)
            .ok_or_else(|| EmbeddingError::NotFound(word.to_string()))?;
        let query = &self.entries.vectors[query_idx];
        let query_norm = norm(query);
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != query_idx && !exclude.contains(&self.entries.words[*i]))
            .map(|(i, v)| (i, cosine_with_norms(query, query_norm, v, norm(v))))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.entries.words[a.0].cmp(&self.entries.words[b.0]))
        });
        Ok(scored
            .into_iter()
            .map(|(i, s)| (self.entries.words[i].clone(), s))
            .collect())
    }

    /// Component-wise mean of the vectors of `words`.
    pub fn centroid<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<f64>, EmbeddingError> {
        if words.is_empty() {
            return Err(EmbeddingError::Invalid(
                "centroid of an empty word list".into(),
            ));
        }
        let missing: Vec<String> = words
            .iter()
            .map(AsRef::as_ref)
            .filter(|w| self.lookup(w).is_none())
            .map(str::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(EmbeddingError::Unresolvable(missing));
        }
        let mut sum = vec![0.0; self.dim];
        for word in words {
            let v = self.lookup(word.as_ref()).expect("checked above");
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        let n = words.len() as f64;
        Ok(sum.into_iter().map(|s| s / n).collect())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(cosine_with_norms(a, norm(a), b, norm(b)))
}

/// Loads `word c1 ... cd` lines. The first line fixes the dimension.
pub fn load_embeddings(
    path: &Path,
    limit: Option<usize>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let file = std::fs::File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut dim = None;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        if limit.is_some_and(|l| entries.len() >= l) {
            break;
        }
        let line_no = i + 1;
        let line = line.map_err(|source| EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| EmbeddingError::Parse {
                        line: line_no,
                        message: format!("non-numeric component `{f}`"),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected || expected == 0 {
            return Err(EmbeddingError::Parse {
                line: line_no,
                message: format!("expected {expected} components, found {}", vector.len()),
            });
        }
        entries.push((word.to_string(), vector));
    }
    match dim {
        Some(d) => EmbeddingTable::from_entries(d, entries),
        None => Err(EmbeddingError::Invalid(format!(
            "{} contains no vectors",
            path.display()
        ))),
    }
}
