//! Oracle checks shared by the unit-style tests and the acceptance runner.
//! Each check panics on the first mismatch.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use super::common::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use recallqa::metrics::{aggregate, mean_std, token_f1, Grouping, RunResult, SubsetCell};
use recallqa::poisoning::{ContextRecord, SubsetLabel};
use recallqa::retrieval::recall_at_k;
use recallqa::{
    sari, AblationMode, Answer, Bm25, Bm25Params, Corpus, DatasetTag, InvertedIndex, Paragraph, Prediction, RankedList,
};

const WORDS: [&str; 25] = [
    "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu", "nu", "xi",
    "omicron", "pi", "rho", "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega", "Alpha",
];

pub fn random_corpus(seed: u64, n: usize) -> (Corpus, Vec<OracleDoc>) {
    let mut rng = rng(seed);
    let mut paragraphs = Vec::new();
    let mut docs = Vec::new();
    for i in 0..n {
        let title = random_sentence(&mut rng, &WORDS[..6], 2);
        let mut text = random_sentence(&mut rng, &WORDS, 14);
        if text.is_empty() {
            text = "omega".into();
        }
        let pid = format!("d{i:02}");
        let mut tokens = oracle_tokens(&title);
        tokens.extend(oracle_tokens(&text));
        docs.push(OracleDoc {
            pid: pid.clone(),
            tokens,
        });
        paragraphs.push(Paragraph {
            pid,
            title,
            text: format!("{text}."),
        });
    }
    (Corpus::from_paragraphs(paragraphs).unwrap(), docs)
}

pub fn bm25_matches_brute_force() {
    let (corpus, docs) = random_corpus(1, 30);
    let index = InvertedIndex::build(&corpus).unwrap();
    let mut rng = rng(2);
    for params in [Bm25Params::default(), Bm25Params { k1: 0.9, b: 0.4 }] {
        let bm25 = Bm25::new(&index, params);
        for _ in 0..20 {
            let mut query = random_sentence(&mut rng, &WORDS, 5);
            if rng.random_bool(0.2) {
                query.push_str(" missingterm");
            }
            let want = brute_bm25(&docs, &query, params.k1, params.b);
            let tokens = recallqa::tokenize(&query);
            for (pid, w) in &want {
                let got = bm25.score(&tokens, pid).unwrap();
                assert!((got - w).abs() < 1e-9, "{query:?} {pid}: {got} vs {w}");
            }
            let mut ranked: Vec<(&String, &f64)> = want.iter().filter(|(_, s)| **s > 0.0).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
            let list = bm25.retrieve_topk(&query, 30).unwrap();
            let got: Vec<&str> = list.pids().collect();
            let want_pids: Vec<&str> = ranked.iter().map(|(p, _)| p.as_str()).collect();
            assert_eq!(got.len(), want_pids.len());
            for (e, (p, s)) in list.entries.iter().zip(&ranked) {
                assert!((e.score - **s).abs() < 1e-9, "{} vs {}", e.pid, p);
            }
        }
    }
}

pub fn bm25_hand_example() {
    let corpus = Corpus::from_paragraphs([
        Paragraph {
            pid: "d1".into(),
            title: String::new(),
            text: "cat sat".into(),
        },
        Paragraph {
            pid: "d2".into(),
            title: String::new(),
            text: "dog sat".into(),
        },
    ])
    .unwrap();
    let index = InvertedIndex::build(&corpus).unwrap();
    let bm25 = Bm25::new(&index, Bm25Params::default());
    let q = vec!["cat".to_string()];
    assert!((bm25.score(&q, "d1").unwrap() - 2f64.ln()).abs() < 1e-12);
    assert_eq!(bm25.score(&q, "d2").unwrap(), 0.0);
}

pub fn recall_matches_set_intersection() {
    let mut rng = rng(11);
    let pool: Vec<String> = (0..30).map(|i| format!("p{i}")).collect();
    for _ in 0..100 {
        let n = rng.random_range(1..=30);
        let mut ranking: Vec<String> = pool.clone();
        ranking.shuffle(&mut rng);
        ranking.truncate(n);
        let g = rng.random_range(1..=6);
        let gold: BTreeSet<String> = pool.choose_multiple(&mut rng, g).cloned().collect();
        let list = RankedList::from_scores(
            "q",
            ranking
                .iter()
                .enumerate()
                .map(|(i, p)| (p.clone(), 100.0 - i as f64))
                .collect(),
        );
        let mut prev = 0.0;
        for k in 1..=n + 2 {
            let got = recall_at_k(&list, &gold, k).unwrap();
            assert_eq!(got, brute_recall(&ranking, &gold, k));
            assert!(got >= prev);
            prev = got;
        }
    }
}

pub fn sari_matches_reference_implementation() {
    for (s, c, refs) in sari_triples(5, 50) {
        let got = sari(&s, &c, &refs).unwrap();
        let want = oracle_sari(&s, &c, &refs);
        assert!((got - want).abs() < 1e-6, "{s:?} {c:?} {refs:?}: {got} vs {want}");
        assert!((0.0..=100.0).contains(&got));
    }
}

pub fn token_f1_hand_values() {
    for (pred, gold, want) in F1_CASES {
        let got = token_f1(pred, gold);
        assert!((got - want).abs() < 1e-9, "{pred:?} / {gold:?}: {got} vs {want}");
    }
    assert!((token_f1("New Delhi", "Delhi") - 0.6667).abs() < 1e-4);
}

/// Runs where run `i` answers `correct[i]` of `n` questions correctly.
fn runs_with_accuracy(correct: &[usize], n: usize) -> (Vec<RunResult>, BTreeMap<String, Answer>) {
    let gold: BTreeMap<String, Answer> = (0..n).map(|i| (format!("q{i}"), Answer::Bool(true))).collect();
    let runs = correct
        .iter()
        .enumerate()
        .map(|(r, &c)| {
            let predictions = (0..n)
                .map(|i| Prediction {
                    qid: format!("q{i}"),
                    mode: AblationMode::Context,
                    target_m: 1.0,
                    data_seed: (r / 3) as u64,
                    model_seed: (r % 3) as u64,
                    answer: Some(Answer::Bool(i < c)),
                    failed: false,
                    predictor_id: "fixed".into(),
                    error: None,
                    latency_ms: 0.0,
                })
                .collect();
            let contexts = (0..n)
                .map(|i| {
                    (
                        format!("q{i}"),
                        ContextRecord {
                            qid: format!("q{i}"),
                            target_m: 1.0,
                            data_seed: (r / 3) as u64,
                            paragraph_ids: vec!["p".into()],
                            selected_annotator: 0,
                            realized_recall: 1.0,
                            subset: SubsetLabel::Easy,
                        },
                    )
                })
                .collect();
            RunResult {
                dataset_tag: DatasetTag::StrategyQa,
                target_m: 1.0,
                data_seed: (r / 3) as u64,
                model_seed: (r % 3) as u64,
                predictions,
                contexts,
            }
        })
        .collect();
    (runs, gold)
}

pub fn aggregate_closed_form() {
    let (runs, gold) = runs_with_accuracy(&[6, 8], 10);
    let report = aggregate(&runs, &gold, Grouping::default()).unwrap();
    let row = report
        .find(
            DatasetTag::StrategyQa,
            1.0,
            SubsetCell::All,
            AblationMode::Context,
            "accuracy",
        )
        .unwrap();
    assert!((row.mean.unwrap() - 0.7).abs() < 1e-12);
    assert!((row.std.unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(row.n_runs, 2);

    let (runs, gold) = runs_with_accuracy(&[1, 2, 3, 4, 5, 6, 7, 8, 9], 10);
    let report = aggregate(&runs, &gold, Grouping::default()).unwrap();
    let row = report
        .find(
            DatasetTag::StrategyQa,
            1.0,
            SubsetCell::All,
            AblationMode::Context,
            "accuracy",
        )
        .unwrap();
    let want_std = (60.0f64 / 9.0).sqrt() * 0.1;
    assert!((row.mean.unwrap() - 0.5).abs() < 1e-12);
    assert!((row.std.unwrap() - want_std).abs() < 1e-12);
    assert_eq!(row.n_runs, 9);
    for subset in [SubsetCell::Med, SubsetCell::Hard] {
        let r = report
            .find(DatasetTag::StrategyQa, 1.0, subset, AblationMode::Context, "accuracy")
            .unwrap();
        assert_eq!(r.n_examples, 0.0);
        assert_eq!(r.mean, None);
    }
    let (mean, std) = mean_std(&[0.7; 9]).unwrap();
    assert!((mean - 0.7).abs() < 1e-12 && std < 1e-12);
}
