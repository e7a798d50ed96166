use std::collections::{BTreeMap, BTreeSet, HashSet};

use bsw_core::wordnet::{
    generalization_candidates, hypernym_generalize, load_wordnet, Synset, SynsetId, WordNetDb,
};
use proptest::prelude::*;

// Synset i may only point at synsets with smaller index, so the graph is a DAG.
fn db_strategy() -> impl Strategy<Value = WordNetDb> {
    (2usize..25)
        .prop_flat_map(|n| {
            let nodes: Vec<_> = (0..n)
                .map(|i| {
                    (
                        prop::collection::btree_set(0usize..12, 1..3),
                        if i == 0 {
                            Just(BTreeSet::new()).boxed()
                        } else {
                            prop::collection::btree_set(0..i, 0..3).boxed()
                        },
                    )
                })
                .collect();
            nodes
        })
        .prop_map(|nodes| {
            let id = |i: usize| SynsetId::noun(100 + i as u32);
            let mut index: BTreeMap<String, Vec<SynsetId>> = BTreeMap::new();
            let synsets: Vec<Synset> = nodes
                .iter()
                .enumerate()
                .map(|(i, (lemmas, hypers))| {
                    let lemmas: Vec<String> = lemmas.iter().map(|l| format!("l{l}")).collect();
                    for l in &lemmas {
                        index.entry(l.clone()).or_default().push(id(i));
                    }
                    Synset {
                        id: id(i),
                        lemmas,
                        hypernyms: hypers.iter().map(|&h| id(h)).collect(),
                    }
                })
                .collect();
            WordNetDb::new(synsets, index).unwrap()
        })
}

fn all_lemmas(db: &WordNetDb) -> HashSet<String> {
    db.lemmas().map(str::to_string).collect()
}

type Sense = (Vec<String>, BTreeSet<Vec<String>>);

// Lemma-level shape of the graph, independent of offsets.
fn signature(db: &WordNetDb) -> BTreeMap<String, BTreeSet<Sense>> {
    db.lemmas()
        .map(|lemma| {
            let senses = db
                .senses(lemma)
                .iter()
                .map(|id| {
                    let s = db.synset(*id).unwrap();
                    let hypers = s
                        .hypernyms
                        .iter()
                        .map(|h| db.synset(*h).unwrap().lemmas.clone())
                        .collect();
                    (s.lemmas.clone(), hypers)
                })
                .collect();
            (lemma.to_string(), senses)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn higher_levels_only_shrink_the_ancestry(db in db_strategy(), pick in 0usize..12, level in 0usize..5) {
        let word = format!("l{pick}");
        prop_assume!(db.contains_lemma(&word));
        let seeds = db.senses(&word).to_vec();
        let closure = |l| -> HashSet<SynsetId> {
            db.upward_closure(&db.frontier_at_level(&seeds, l)).into_iter().collect()
        };
        prop_assert!(closure(level + 1).is_subset(&closure(level)));
        let vocab = all_lemmas(&db);
        let lower: HashSet<String> = generalization_candidates(&db, &word, level, &vocab).into_iter().collect();
        let upper: HashSet<String> = generalization_candidates(&db, &word, level + 1, &vocab).into_iter().collect();
        prop_assert!(upper.is_subset(&lower));
    }

    #[test]
    fn generalization_never_returns_the_word(db in db_strategy(), pick in 0usize..12, level in 0usize..6) {
        let word = format!("l{pick}");
        let vocab = all_lemmas(&db);
        if let Some(g) = hypernym_generalize(&db, &word, level, &vocab) {
            prop_assert_ne!(&g, &word);
            prop_assert!(vocab.contains(&g));
        }
    }

    #[test]
    fn flat_files_round_trip(db in db_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        db.write_flat(dir.path()).unwrap();
        let back = load_wordnet(dir.path()).unwrap();
        prop_assert_eq!(back.len(), db.len());
        prop_assert_eq!(signature(&back), signature(&db));
    }
}
