//! Classification and bias metrics: ROC-AUC, the pinned-bias (PB) family
//! over single-word probes, and pinned AUC equality difference (pAUC) over
//! a template corpus with per-document BSW annotations.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{probe_words, Classifier, ClassifierError, ProbeError};
use crate::corpus::{Label, LabeledCorpus};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("AUC is undefined without both classes ({positives} hateful, {negatives} neutral)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("PB needs at least one word")]
    EmptyWordSet,
    #[error("subgroup for `{word}` lacks one of the classes")]
    SubgroupSingleClass { word: String },
    #[error("no runs to aggregate")]
    NoRuns,
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("cannot write report {path}: {message}")]
    Write { path: String, message: String },
}

/// Area under the ROC curve for `scores` against `labels` (Hateful is the
/// positive class), from the Mann-Whitney U statistic with average ranks.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(bad));
    }
    let positives = labels.iter().filter(|l| l.is_hateful()).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share their mean, 1-based
        let rank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end]
            .iter()
            .filter(|&&i| labels[i].is_hateful())
            .count();
        positive_rank_sum += rank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PinnedVariant {
    Mean,
    Sym,
    Asym,
}

impl PinnedVariant {
    pub const ALL: [PinnedVariant; 3] =
        [PinnedVariant::Mean, PinnedVariant::Sym, PinnedVariant::Asym];

    pub fn as_str(self) -> &'static str {
        match self {
            PinnedVariant::Mean => "mean",
            PinnedVariant::Sym => "sym",
            PinnedVariant::Asym => "asym",
        }
    }

    /// The pinned value for each probe.
    pub fn pinned_values(self, probes: &[f64]) -> Vec<f64> {
        match self {
            PinnedVariant::Mean => {
                let mean = probes.iter().sum::<f64>() / probes.len().max(1) as f64;
                vec![mean; probes.len()]
            }
            PinnedVariant::Sym => vec![0.5; probes.len()],
            PinnedVariant::Asym => probes.iter().map(|p| p.min(0.5)).collect(),
        }
    }
}

impl fmt::Display for PinnedVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PinnedVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PinnedVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown PB variant `{s}` (mean, sym, asym)"))
    }
}

/// Mean absolute deviation of the probes from their pinned values.
pub fn pb_from_probes(probes: &[f64], variant: PinnedVariant) -> Result<f64, MetricError> {
    if probes.is_empty() {
        return Err(MetricError::EmptyWordSet);
    }
    if let Some(&bad) = probes.iter().find(|p| !p.is_finite()) {
        return Err(MetricError::NonFinite(bad));
    }
    let pinned = variant.pinned_values(probes);
    let total: f64 = probes
        .iter()
        .zip(&pinned)
        .map(|(p, phi)| (p - phi).abs())
        .sum();
    Ok(total / probes.len() as f64)
}

/// Probes each distinct word once and computes PB. Probes come back sorted
/// by word.
pub fn pb<C: Classifier + ?Sized, S: AsRef<str>>(
    backend: &C,
    words: &[S],
    variant: PinnedVariant,
    concurrency: usize,
) -> Result<(f64, Vec<(String, f64)>), MetricError> {
    let distinct: Vec<String> = words
        .iter()
        .map(|w| w.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if distinct.is_empty() {
        return Err(MetricError::EmptyWordSet);
    }
    let probes = probe_words(backend, &distinct, concurrency, |_, _| {})?;
    let values: Vec<f64> = probes.iter().map(|(_, p)| *p).collect();
    Ok((pb_from_probes(&values, variant)?, probes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaucResult {
    pub pauc: f64,
    pub overall_auc: f64,
    pub subgroup_auc: BTreeMap<String, f64>,
    /// BSWs with no annotated documents.
    pub skipped: Vec<String>,
}

/// pAUC from precomputed document scores (aligned with `corpus`).
///
/// For each word, its annotated documents are paired with an equally sized
/// seeded sample of the other documents; pAUC sums the absolute gaps
/// between each subgroup AUC and the AUC over all subgroups pooled.
pub fn pauc_from_scores<S: AsRef<str>>(
    corpus: &LabeledCorpus,
    scores: &[f64],
    bsw_words: &[S],
    seed: u64,
) -> Result<PaucResult, MetricError> {
    let docs = corpus.documents();
    if scores.len() != docs.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: docs.len(),
        });
    }
    let words: BTreeSet<&str> = bsw_words.iter().map(AsRef::as_ref).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    let mut subgroup_auc = BTreeMap::new();
    let mut skipped = Vec::new();

    for word in words {
        let (inside, outside): (Vec<usize>, Vec<usize>) =
            (0..docs.len()).partition(|&i| docs[i].bsw.as_deref() == Some(word));
        if inside.is_empty() {
            log::warn!("no documents annotated with `{word}`; excluded from pAUC");
            skipped.push(word.to_string());
            continue;
        }
        let amount = inside.len().min(outside.len());
        if amount < inside.len() {
            log::warn!(
                "only {} background documents for `{word}` ({} wanted)",
                outside.len(),
                inside.len()
            );
        }
        let background = rand::seq::index::sample(&mut rng, outside.len(), amount);
        let members: Vec<usize> = inside
            .iter()
            .copied()
            .chain(background.iter().map(|j| outside[j]))
            .collect();
        let s: Vec<f64> = members.iter().map(|&i| scores[i]).collect();
        let l: Vec<Label> = members.iter().map(|&i| docs[i].label()).collect();
        let auc = roc_auc(&s, &l).map_err(|e| match e {
            MetricError::SingleClass { .. } => MetricError::SubgroupSingleClass {
                word: word.to_string(),
            },
            other => other,
        })?;
        log::debug!(
            "pAUC subgroup `{word}`: {} + {} documents, AUC {auc:.6}",
            inside.len(),
            amount
        );
        subgroup_auc.insert(word.to_string(), auc);
        pooled_scores.extend(s);
        pooled_labels.extend(l);
    }

    if subgroup_auc.is_empty() {
        return Ok(PaucResult {
            pauc: 0.0,
            overall_auc: f64::NAN,
            subgroup_auc,
            skipped,
        });
    }
    let overall_auc = roc_auc(&pooled_scores, &pooled_labels)?;
    let pauc = subgroup_auc.values().map(|a| (overall_auc - a).abs()).sum();
    Ok(PaucResult {
        pauc,
        overall_auc,
        subgroup_auc,
        skipped,
    })
}

/// Scores every document with `backend`, then computes pAUC.
pub fn pauc<C: Classifier + ?Sized, S: AsRef<str>>(
    backend: &C,
    corpus: &LabeledCorpus,
    bsw_words: &[S],
    seed: u64,
) -> Result<PaucResult, MetricError> {
    let scores = score_documents(backend, corpus)?;
    pauc_from_scores(corpus, &scores, bsw_words, seed)
}

pub fn score_documents<C: Classifier + ?Sized>(
    backend: &C,
    corpus: &LabeledCorpus,
) -> Result<Vec<f64>, MetricError> {
    corpus
        .documents()
        .iter()
        .map(|d| Ok(backend.predict_tokens(&d.tokens)?.p_hateful))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub detection: String,
    pub replacement: String,
    pub run_count: usize,
    pub roc_auc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pb_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pb_sym: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pb_asym: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauc: Option<f64>,
    pub per_word: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub subgroup_auc: BTreeMap<String, f64>,
    pub skipped_bsws: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Identifies what a report was computed on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportMetadata {
    pub dataset: String,
    pub detection: String,
    pub replacement: String,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub timestamp: Option<String>,
}

impl EvalReport {
    pub fn pb(&self, variant: PinnedVariant) -> Option<f64> {
        match variant {
            PinnedVariant::Mean => self.pb_mean,
            PinnedVariant::Sym => self.pb_sym,
            PinnedVariant::Asym => self.pb_asym,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<(), MetricError> {
        std::fs::write(path, self.to_json()).map_err(|e| MetricError::Write {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Single-run report. PB is computed for every variant listed in
/// `variants` from `probes`.
pub fn build_report(
    metadata: ReportMetadata,
    roc_auc: f64,
    probes: &[(String, f64)],
    variants: &[PinnedVariant],
    pauc: Option<&PaucResult>,
) -> Result<EvalReport, MetricError> {
    let values: Vec<f64> = probes.iter().map(|(_, p)| *p).collect();
    let mut pb: BTreeMap<PinnedVariant, f64> = BTreeMap::new();
    let wanted: HashSet<PinnedVariant> = variants.iter().copied().collect();
    for v in wanted {
        pb.insert(v, pb_from_probes(&values, v)?);
    }
    Ok(EvalReport {
        dataset: metadata.dataset,
        detection: metadata.detection,
        replacement: metadata.replacement,
        run_count: 1,
        roc_auc,
        pb_mean: pb.get(&PinnedVariant::Mean).copied(),
        pb_sym: pb.get(&PinnedVariant::Sym).copied(),
        pb_asym: pb.get(&PinnedVariant::Asym).copied(),
        pauc: pauc.map(|p| p.pauc),
        per_word: probes.iter().cloned().collect(),
        subgroup_auc: pauc.map(|p| p.subgroup_auc.clone()).unwrap_or_default(),
        skipped_bsws: pauc.map(|p| p.skipped.clone()).unwrap_or_default(),
        seeds: vec![metadata.seed],
        config_hash: metadata.config_hash,
        timestamp: metadata.timestamp,
    })
}

fn mean_of<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn mean_maps<'a, I>(maps: I, runs: usize) -> BTreeMap<String, f64>
where
    I: IntoIterator<Item = &'a BTreeMap<String, f64>>,
{
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for map in maps {
        for (k, v) in map {
            let e = sums.entry(k.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    // keys present in every run only
    sums.into_iter()
        .filter(|(_, (_, n))| *n == runs)
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

/// Averages several runs. A metric missing from any run is absent from
/// the aggregate.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport, MetricError> {
    let first = reports.first().ok_or(MetricError::NoRuns)?;
    let runs = reports.len();
    let mut skipped: BTreeSet<String> = BTreeSet::new();
    for r in reports {
        skipped.extend(r.skipped_bsws.iter().cloned());
    }
    Ok(EvalReport {
        dataset: first.dataset.clone(),
        detection: first.detection.clone(),
        replacement: first.replacement.clone(),
        run_count: reports.iter().map(|r| r.run_count).sum(),
        roc_auc: mean_of(reports.iter().map(|r| Some(r.roc_auc))).expect("nonempty"),
        pb_mean: mean_of(reports.iter().map(|r| r.pb_mean)),
        pb_sym: mean_of(reports.iter().map(|r| r.pb_sym)),
        pb_asym: mean_of(reports.iter().map(|r| r.pb_asym)),
        pauc: mean_of(reports.iter().map(|r| r.pauc)),
        per_word: mean_maps(reports.iter().map(|r| &r.per_word), runs),
        subgroup_auc: mean_maps(reports.iter().map(|r| &r.subgroup_auc), runs),
        skipped_bsws: skipped.into_iter().collect(),
        seeds: reports
            .iter()
            .flat_map(|r| r.seeds.iter().copied())
            .collect(),
        config_hash: first.config_hash.clone(),
        timestamp: first.timestamp.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use approx::assert_abs_diff_eq;
    use Label::{Hateful as H, Neutral as N};

    #[test]
    fn auc_examples() {
        assert_eq!(
            roc_auc(&[0.1, 0.4, 0.35, 0.8], &[N, N, H, H]).unwrap(),
            0.75
        );
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[N, N, H, H]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[N, N, H, H]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[N, H]).unwrap(), 0.5);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[H, H]),
            Err(MetricError::SingleClass { .. })
        ));
        assert!(roc_auc(&[0.1], &[H, N]).is_err());
    }

    #[test]
    fn pb_examples() {
        let p = [0.7, 0.5, 0.3];
        assert_abs_diff_eq!(
            pb_from_probes(&p, PinnedVariant::Sym).unwrap(),
            0.4 / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pb_from_probes(&p, PinnedVariant::Mean).unwrap(),
            0.4 / 3.0,
            epsilon = 1e-12
        );
        assert_eq!(
            pb_from_probes(&[0.1, 0.5, 0.2], PinnedVariant::Asym).unwrap(),
            0.0
        );
        // one word at 0.3 and one at 0.7: average deviation 0.2 from 0.5
        assert_abs_diff_eq!(
            pb_from_probes(&[0.3, 0.7], PinnedVariant::Sym).unwrap(),
            0.2,
            epsilon = 1e-12
        );
        assert!(pb_from_probes(&[], PinnedVariant::Sym).is_err());
    }

    fn annotated(rows: &[(&str, Label)]) -> LabeledCorpus {
        LabeledCorpus::new(
            "m",
            rows.iter()
                .enumerate()
                .map(|(i, (w, l))| {
                    Document::new(i.to_string(), format!("{w} text"), Some(*l)).with_bsw(*w)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pauc_is_zero_for_label_only_scores() {
        let c = annotated(&[("a", H), ("a", N), ("b", H), ("b", N), ("c", H), ("c", N)]);
        let scores: Vec<f64> = c
            .documents()
            .iter()
            .map(|d| if d.label().is_hateful() { 0.9 } else { 0.1 })
            .collect();
        let r = pauc_from_scores(&c, &scores, &["a", "b", "c", "zzz"], 1).unwrap();
        assert_eq!(r.pauc, 0.0);
        assert_eq!(r.overall_auc, 1.0);
        assert_eq!(r.skipped, vec!["zzz"]);
    }

    #[test]
    fn pauc_single_class_subgroup_is_error() {
        let c = annotated(&[("a", H), ("b", H)]);
        assert!(matches!(
            pauc_from_scores(&c, &[0.2, 0.3], &["a"], 1),
            Err(MetricError::SubgroupSingleClass { .. })
        ));
    }

    #[test]
    fn report_and_aggregate() {
        let probes = vec![("a".to_string(), 0.7), ("b".to_string(), 0.3)];
        let meta = ReportMetadata {
            dataset: "d".into(),
            seed: 1,
            ..Default::default()
        };
        let r1 = build_report(meta.clone(), 0.8, &probes, &PinnedVariant::ALL, None).unwrap();
        assert_eq!(r1.run_count, 1);
        assert!(r1.pauc.is_none());
        assert!(!r1.to_json().contains("pauc"));
        let mut r2 = r1.clone();
        r2.roc_auc = 0.6;
        r2.pb_sym = Some(0.0);
        let agg = aggregate(&[r1.clone(), r2]).unwrap();
        assert_eq!(agg.run_count, 2);
        assert_abs_diff_eq!(agg.roc_auc, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(agg.pb_sym.unwrap(), 0.1, epsilon = 1e-12);
        let back: EvalReport = serde_json::from_str(&r1.to_json()).unwrap();
        assert_eq!(back, r1);
    }
}
