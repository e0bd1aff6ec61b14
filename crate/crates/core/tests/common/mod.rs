//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the library except for input types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Character scan: lowercase runs of alphanumerics.
pub fn oracle_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub struct OracleDoc {
    pub pid: String,
    pub tokens: Vec<String>,
}

/// Okapi BM25 evaluated directly from the definition for every document.
pub fn brute_bm25(docs: &[OracleDoc], query: &str, k1: f64, b: f64) -> BTreeMap<String, f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.tokens.len()).sum::<usize>() as f64 / n;
    let q = oracle_tokens(query);
    let mut out = BTreeMap::new();
    for d in docs {
        let mut score = 0.0;
        for t in &q {
            let tf = d.tokens.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs.iter().filter(|o| o.tokens.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let dl = d.tokens.len() as f64;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        out.insert(d.pid.clone(), score);
    }
    out
}

pub fn brute_recall(ranking: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    let mut hits = 0usize;
    for g in gold {
        let mut found = false;
        for (i, p) in ranking.iter().enumerate() {
            if i < k && p == g {
                found = true;
            }
        }
        if found {
            hits += 1;
        }
    }
    hits as f64 / gold.len() as f64
}

type Counter = HashMap<String, i64>;

fn counter(grams: &[String]) -> Counter {
    let mut c = Counter::new();
    for g in grams {
        *c.entry(g.clone()).or_insert(0) += 1;
    }
    c
}

fn and(a: &Counter, b: &Counter) -> Counter {
    let mut c = Counter::new();
    for (k, v) in a {
        let m = (*v).min(*b.get(k).unwrap_or(&0));
        if m > 0 {
            c.insert(k.clone(), m);
        }
    }
    c
}

fn minus(a: &Counter, b: &Counter) -> Counter {
    let mut c = Counter::new();
    for (k, v) in a {
        let d = v - b.get(k).unwrap_or(&0);
        if d > 0 {
            c.insert(k.clone(), d);
        }
    }
    c
}

fn get(c: &Counter, k: &str) -> f64 {
    *c.get(k).unwrap_or(&0) as f64
}

fn ngrams(tokens: &[String], n: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].join(" "));
        i += 1;
    }
    out
}

/// Per-order (keep, delete, add), transcribed from the original SARI
/// script, with empty-vs-empty components scored as 1.
fn sari_ngram(s: &[String], c: &[String], rs: &[Vec<String>], numref: i64) -> (f64, f64, f64) {
    let rall: Vec<String> = rs.iter().flatten().cloned().collect();
    let rgram = counter(&rall);
    let sgram = counter(s);
    let cgram = counter(c);
    let srep: Counter = sgram.iter().map(|(k, v)| (k.clone(), v * numref)).collect();
    let crep: Counter = cgram.iter().map(|(k, v)| (k.clone(), v * numref)).collect();

    let keep = and(&srep, &crep);
    let keep_good = and(&keep, &rgram);
    let keep_all = and(&srep, &rgram);
    let (mut t1, mut t2) = (0.0, 0.0);
    for g in keep.keys() {
        t1 += get(&keep_good, g) / get(&keep, g);
        if keep_all.contains_key(g) {
            t2 += get(&keep_good, g) / get(&keep_all, g);
        }
    }
    let keep_p = if keep.is_empty() { 0.0 } else { t1 / keep.len() as f64 };
    let keep_r = if keep_all.is_empty() {
        0.0
    } else {
        t2 / keep_all.len() as f64
    };
    let mut keep_score = if keep_p > 0.0 || keep_r > 0.0 {
        2.0 * keep_p * keep_r / (keep_p + keep_r)
    } else {
        0.0
    };
    if keep.is_empty() && keep_all.is_empty() {
        keep_score = 1.0;
    }

    let del = minus(&srep, &crep);
    let del_good = minus(&del, &rgram);
    let del_all = minus(&srep, &rgram);
    let mut d1 = 0.0;
    for g in del.keys() {
        d1 += get(&del_good, g) / get(&del, g);
    }
    let mut del_score = if del.is_empty() { 0.0 } else { d1 / del.len() as f64 };
    if del.is_empty() && del_all.is_empty() {
        del_score = 1.0;
    }

    let skeys: BTreeSet<&String> = sgram.keys().collect();
    let add: BTreeSet<&String> = cgram.keys().filter(|k| !skeys.contains(k)).collect();
    let add_all: BTreeSet<&String> = rgram.keys().filter(|k| !skeys.contains(k)).collect();
    let mut tmp = 0.0;
    for g in &add {
        if rgram.contains_key(*g) {
            tmp += 1.0;
        }
    }
    let add_p = if add.is_empty() { 0.0 } else { tmp / add.len() as f64 };
    let add_r = if add_all.is_empty() {
        0.0
    } else {
        tmp / add_all.len() as f64
    };
    let mut add_score = if add_p > 0.0 || add_r > 0.0 {
        2.0 * add_p * add_r / (add_p + add_r)
    } else {
        0.0
    };
    if add.is_empty() && add_all.is_empty() {
        add_score = 1.0;
    }
    (keep_score, del_score, add_score)
}

pub fn oracle_sari(source: &str, output: &str, refs: &[String]) -> f64 {
    let s = oracle_tokens(source);
    let c = oracle_tokens(output);
    let r: Vec<Vec<String>> = refs.iter().map(|x| oracle_tokens(x)).collect();
    let numref = refs.len() as i64;
    let (mut k, mut d, mut a) = (0.0, 0.0, 0.0);
    for n in 1..=4 {
        let rn: Vec<Vec<String>> = r.iter().map(|t| ngrams(t, n)).collect();
        let (kk, dd, aa) = sari_ngram(&ngrams(&s, n), &ngrams(&c, n), &rn, numref);
        k += kk;
        d += dd;
        a += aa;
    }
    let (k, d, a) = (k / 4.0, d / 4.0, a / 4.0);
    100.0 * (k + d + a) / 3.0
}

/// Random text over a small vocabulary, so n-grams actually collide.
pub fn random_sentence(rng: &mut ChaCha8Rng, vocab: &[&str], max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| *vocab.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn sari_triples(seed: u64, count: usize) -> Vec<(String, String, Vec<String>)> {
    let vocab = [
        "the", "cat", "sat", "on", "mat", "a", "dog", "ran", "far", "away", "big", "red",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s = random_sentence(&mut rng, &vocab, 10);
            let c = random_sentence(&mut rng, &vocab, 10);
            let nref = rng.random_range(1..=3);
            let refs = (0..nref).map(|_| random_sentence(&mut rng, &vocab, 10)).collect();
            (s, c, refs)
        })
        .collect()
}

/// Hand-computed token F1 values.
pub const F1_CASES: [(&str, &str, f64); 20] = [
    ("Delhi", "Delhi", 1.0),
    ("New Delhi", "Delhi", 2.0 / 3.0),
    ("cat", "dog", 0.0),
    ("", "", 1.0),
    ("a", "", 0.0),
    ("", "a", 0.0),
    ("the cat sat", "the cat", 0.8),
    ("a a b", "a b b", 2.0 / 3.0),
    ("New York City", "york", 0.5),
    ("Barack Obama", "barack hussein obama", 0.8),
    ("1 2 3 4", "4 3 2 1", 1.0),
    ("yes", "no", 0.0),
    ("a b c d", "a", 0.4),
    ("The Beatles!", "the beatles", 1.0),
    ("x y", "x z", 0.5),
    ("a a a", "a", 0.5),
    ("United-States", "united states of america", 2.0 / 3.0),
    ("red blue green", "green red", 0.8),
    ("one two three four five", "one two", 4.0 / 7.0),
    ("!!!", "...", 1.0),
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
