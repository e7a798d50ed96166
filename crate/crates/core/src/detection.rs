//! Ranking of bias-sensitive word candidates: from label co-occurrence
//! counts (SOAC), from single-word classifier probes (SPCPD), or from a
//! hand-written list.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{probe_words, Classifier, PredictionDistribution, ProbeError};
use crate::corpus::VocabularyStats;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid candidate file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionStrategy {
    Manual,
    #[serde(rename = "SOAC")]
    Soac,
    #[serde(rename = "SPCPD")]
    Spcpd,
}

impl DetectionStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionStrategy::Manual => "Manual",
            DetectionStrategy::Soac => "SOAC",
            DetectionStrategy::Spcpd => "SPCPD",
        }
    }
}

impl fmt::Display for DetectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "manual" => Ok(DetectionStrategy::Manual),
            "soac" => Ok(DetectionStrategy::Soac),
            "spcpd" => Ok(DetectionStrategy::Spcpd),
            _ => Err(format!(
                "unknown detection strategy `{s}` (manual, soac, spcpd)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateStats {
    Counts { tf: usize, df: usize, df_pos: usize },
    Probe { p_hateful: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BswCandidate {
    pub word: String,
    pub score: Option<f64>,
    pub strategy: DetectionStrategy,
    pub stats: Option<CandidateStats>,
    /// Phrases are kept but cannot be replaced token by token.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub multiword: bool,
}

impl BswCandidate {
    pub fn manual(term: &str) -> Self {
        BswCandidate {
            word: term.to_string(),
            score: None,
            strategy: DetectionStrategy::Manual,
            stats: None,
            multiword: term.split_whitespace().count() > 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    /// SOAC keeps words whose term frequency is strictly above this.
    pub tf_cutoff: usize,
    pub tau: f64,
    /// Class index excluded from the SPCPD maximum.
    pub catchall_class: usize,
    pub abusive: HashSet<String>,
    /// Maximum list length; 0 keeps everything.
    pub top_n: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            tf_cutoff: 10,
            tau: 0.5,
            catchall_class: 0,
            abusive: HashSet::new(),
            top_n: 10,
        }
    }
}

impl DetectionConfig {
    fn truncate<T>(&self, items: &mut Vec<T>) {
        if self.top_n > 0 {
            items.truncate(self.top_n);
        }
    }
}

/// Words seen more than `tf_cutoff` times and in more hateful than neutral
/// documents, ranked by document frequency and then hateful share.
pub fn detect_soac(vocab: &VocabularyStats, config: &DetectionConfig) -> Vec<BswCandidate> {
    let mut kept: Vec<_> = vocab
        .iter()
        .filter(|(w, _)| !config.abusive.contains(*w))
        .filter(|(_, s)| s.tf > config.tf_cutoff && s.df_pos > s.df_neg)
        .collect();
    kept.sort_by(|(wa, a), (wb, b)| {
        b.df.cmp(&a.df)
            .then_with(|| {
                // df_pos/df compared exactly; df > 0 for every kept word
                let lhs = b.df_pos as u128 * a.df as u128;
                let rhs = a.df_pos as u128 * b.df as u128;
                lhs.cmp(&rhs)
            })
            .then_with(|| wa.cmp(wb))
    });
    config.truncate(&mut kept);
    kept.into_iter()
        .map(|(word, s)| BswCandidate {
            word: word.to_string(),
            score: Some(s.df_pos as f64 / s.df as f64),
            strategy: DetectionStrategy::Soac,
            stats: Some(CandidateStats::Counts {
                tf: s.tf,
                df: s.df,
                df_pos: s.df_pos,
            }),
            multiword: false,
        })
        .collect()
}

/// Largest probability over the classes other than `catchall`.
pub fn spcpd_score(distribution: &[f64], catchall: usize) -> f64 {
    distribution
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != catchall)
        .map(|(_, p)| *p)
        .fold(0.0, f64::max)
}

/// Ranks already probed words. `probes` pairs each word with its
/// single-word p(Hateful); duplicates keep the first score.
pub fn rank_spcpd<'a, I>(probes: I, config: &DetectionConfig) -> Vec<BswCandidate>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut seen = HashSet::new();
    let mut kept: Vec<(String, f64, f64)> = Vec::new();
    for (word, p_hateful) in probes {
        if !seen.insert(word) || config.abusive.contains(word) {
            continue;
        }
        let dist = PredictionDistribution::from_p_hateful(p_hateful);
        let score = spcpd_score(&dist.class_probabilities(), config.catchall_class);
        if score >= config.tau {
            kept.push((word.to_string(), score, p_hateful));
        }
    }
    kept.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    config.truncate(&mut kept);
    kept.into_iter()
        .map(|(word, score, p_hateful)| BswCandidate {
            word,
            score: Some(score),
            strategy: DetectionStrategy::Spcpd,
            stats: Some(CandidateStats::Probe { p_hateful }),
            multiword: false,
        })
        .collect()
}

/// The distinct, non-abusive words of `words` in sorted order; these are the
/// words SPCPD actually probes.
pub fn spcpd_probe_set<S: AsRef<str>>(words: &[S], config: &DetectionConfig) -> Vec<String> {
    words
        .iter()
        .map(|w| w.as_ref())
        .filter(|w| !config.abusive.contains(*w))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// Probes every word with `backend` and ranks by SPCPD.
pub fn detect_spcpd<C: Classifier + ?Sized, S: AsRef<str>>(
    backend: &C,
    words: &[S],
    config: &DetectionConfig,
    concurrency: usize,
) -> Result<Vec<BswCandidate>, ProbeError> {
    let probe_set = spcpd_probe_set(words, config);
    let probes = probe_words(backend, &probe_set, concurrency, |_, _| {})?;
    Ok(rank_spcpd(
        probes.iter().map(|(w, p)| (w.as_str(), *p)),
        config,
    ))
}

fn read_terms(path: &Path) -> Result<Vec<String>, DetectionError> {
    let text = std::fs::read_to_string(path).map_err(|source| DetectionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen = HashSet::new();
    Ok(text
        .lines()
        .map(|l| {
            l.split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase()
        })
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter(|l| seen.insert(l.clone()))
        .collect())
}

/// One term per line; blank lines and `#` comments ignored, case folded,
/// duplicates dropped.
pub fn load_manual_list(path: &Path) -> Result<Vec<BswCandidate>, DetectionError> {
    Ok(read_terms(path)?
        .iter()
        .map(|t| BswCandidate::manual(t))
        .collect())
}

/// Plain word list, as used for the abusive dictionary.
pub fn load_word_set(path: &Path) -> Result<HashSet<String>, DetectionError> {
    Ok(read_terms(path)?.into_iter().collect())
}

pub fn write_candidates_json(
    path: &Path,
    candidates: &[BswCandidate],
) -> Result<(), DetectionError> {
    let json = serde_json::to_string_pretty(candidates).map_err(|e| DetectionError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, json + "\n").map_err(|source| DetectionError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_candidates_json(path: &Path) -> Result<Vec<BswCandidate>, DetectionError> {
    let text = std::fs::read_to_string(path).map_err(|source| DetectionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| DetectionError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One word per line, in rank order.
pub fn write_candidates_txt(
    path: &Path,
    candidates: &[BswCandidate],
) -> Result<(), DetectionError> {
    let mut text = String::new();
    for c in candidates {
        text.push_str(&c.word);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| DetectionError::Io {
        path: path.to_path_buf(),
        source,
    })
}
