use std::collections::{BTreeMap, HashSet};

use bsw_core::classifier::{
    train, Classifier, LocalClassifier, PredictionDistribution, TrainConfig,
};
use bsw_core::corpus::{
    build_vocabulary, Document, Label, LabeledCorpus, VocabularyStats, WordStats,
};
use bsw_core::detection::{detect_soac, detect_spcpd, rank_spcpd, DetectionConfig};
use bsw_core::embeddings::EmbeddingTable;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vocab_strategy() -> impl Strategy<Value = VocabularyStats> {
    prop::collection::btree_map(
        "[a-f]{1,3}",
        (0usize..6, 0usize..6, 0usize..4).prop_map(|(pos, neg, extra)| {
            let df = pos + neg;
            WordStats {
                tf: df + extra,
                df,
                df_pos: pos,
                df_neg: neg,
            }
        }),
        0..60,
    )
    .prop_filter("words occur", |m| m.values().all(|s| s.df > 0))
    .prop_map(VocabularyStats::from_map)
}

// Filter and sort written out directly, with the share compared as a float.
fn soac_oracle(
    vocab: &VocabularyStats,
    cutoff: usize,
    top_n: usize,
    abusive: &HashSet<String>,
) -> Vec<String> {
    let mut rows: Vec<(String, usize, f64)> = Vec::new();
    for (w, s) in vocab.iter() {
        if abusive.contains(w) {
            continue;
        }
        if s.tf > cutoff && s.df_pos > s.df_neg {
            rows.push((w.to_string(), s.df, s.df_pos as f64 / s.df as f64));
        }
    }
    rows.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(b.2.partial_cmp(&a.2).unwrap())
            .then(a.0.cmp(&b.0))
    });
    let mut out: Vec<String> = rows.into_iter().map(|r| r.0).collect();
    if top_n > 0 {
        out.truncate(top_n);
    }
    out
}

proptest! {
    #[test]
    fn soac_matches_oracle(
        vocab in vocab_strategy(),
        cutoff in 0usize..6,
        top_n in 0usize..12,
        banned in prop::collection::hash_set("[a-f]{1,2}", 0..4),
    ) {
        let config = DetectionConfig { tf_cutoff: cutoff, top_n, abusive: banned.clone(), ..Default::default() };
        let got: Vec<String> = detect_soac(&vocab, &config).into_iter().map(|c| c.word).collect();
        prop_assert_eq!(got, soac_oracle(&vocab, cutoff, top_n, &banned));
    }

    #[test]
    fn spcpd_ranking_ignores_input_order(
        probes in prop::collection::btree_map("[a-z]{1,4}", 0.0f64..1.0, 1..30),
        seed in any::<u64>(),
    ) {
        let config = DetectionConfig { top_n: 0, ..Default::default() };
        let mut list: Vec<(&str, f64)> = probes.iter().map(|(w, p)| (w.as_str(), *p)).collect();
        let a = rank_spcpd(list.clone(), &config);
        list.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = rank_spcpd(list, &config);
        prop_assert_eq!(a.clone(), b);
        for pair in a.windows(2) {
            prop_assert!(pair[0].score >= pair[1].score);
        }
        prop_assert!(a.iter().all(|c| (0.0..=1.0).contains(&c.score.unwrap())));
    }
}

struct Fixed(BTreeMap<&'static str, f64>);

impl Classifier for Fixed {
    fn predict(
        &self,
        text: &str,
    ) -> Result<PredictionDistribution, bsw_core::classifier::ClassifierError> {
        Ok(PredictionDistribution::from_p_hateful(
            *self.0.get(text).unwrap_or(&0.1),
        ))
    }
}

#[test]
fn spcpd_over_a_backend() {
    let backend = Fixed(
        [("muslims", 0.81), ("fine", 0.49), ("hmm", 0.5)]
            .into_iter()
            .collect(),
    );
    let words = ["hmm", "muslims", "fine", "muslims"];
    let ranked = detect_spcpd(&backend, &words, &DetectionConfig::default(), 2).unwrap();
    let got: Vec<(&str, f64)> = ranked
        .iter()
        .map(|c| (c.word.as_str(), c.score.unwrap()))
        .collect();
    assert_eq!(got, vec![("muslims", 0.81), ("hmm", 0.5)]);
}

fn unit(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| scale * x / n).collect()
}

#[test]
fn planted_token_is_detected_both_ways() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dim = 24;
    let hate = unit(&mut rng, dim, 1.0);
    let mut entries = Vec::new();
    let hateful: Vec<String> = (0..15).map(|i| format!("slur{i}")).collect();
    let filler: Vec<String> = (0..40).map(|i| format!("word{i}")).collect();
    for w in &hateful {
        let r = unit(&mut rng, dim, 1.0);
        entries.push((
            w.clone(),
            hate.iter()
                .zip(&r)
                .map(|(h, x)| 4.0 * h + 3.0 * x)
                .collect(),
        ));
    }
    for w in filler.iter().chain(std::iter::once(&"planted".to_string())) {
        entries.push((w.clone(), unit(&mut rng, dim, 5.0)));
    }
    let table = EmbeddingTable::from_entries(dim, entries).unwrap();

    let mut docs = Vec::new();
    for i in 0..600 {
        let hateful_doc = i < 180;
        let mut toks: Vec<String> = (0..rng.gen_range(5..10))
            .map(|_| filler.choose(&mut rng).unwrap().clone())
            .collect();
        if hateful_doc {
            toks.push(hateful.choose(&mut rng).unwrap().clone());
        }
        // 30 hateful documents and 2 neutral ones carry the planted token
        if (hateful_doc && i % 6 == 0) || i == 300 || i == 301 {
            toks.insert(rng.gen_range(0..toks.len()), "planted".into());
        }
        let label = if hateful_doc {
            Label::Hateful
        } else {
            Label::Neutral
        };
        docs.push(Document::new(i.to_string(), toks.join(" "), Some(label)));
    }
    let corpus = LabeledCorpus::new("planted", docs).unwrap();
    let stats = build_vocabulary(&corpus).get("planted").copied().unwrap();
    assert!(stats.df_pos as f64 / stats.df as f64 >= 0.9);

    let config = DetectionConfig {
        abusive: hateful.iter().cloned().collect(),
        ..Default::default()
    };
    let soac = detect_soac(&build_vocabulary(&corpus), &config);
    assert!(soac.iter().take(5).any(|c| c.word == "planted"), "{soac:?}");

    let model = train(&corpus, &table, TrainConfig::with_seed(3)).unwrap();
    let clf = LocalClassifier::new(model, table).unwrap();
    assert!(clf.probe("planted").unwrap() >= 0.5);
}
