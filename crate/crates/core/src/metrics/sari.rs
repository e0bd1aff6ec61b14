//! SARI: n-gram keep/delete/add agreement of an output with references,
//! relative to its source. Reported on a 0–100 scale.
//!
//! Counts follow the usual multi-reference convention: source and output
//! counts are multiplied by the number of references and compared against
//! reference counts summed over all references. Per n-gram order:
//!
//! - keep: F1 of kept n-grams (source ∩ output) against source ∩ references
//! - delete: precision of deleted n-grams (source − output)
//! - add: F1 of added n-gram types (output − source) against references − source
//!
//! A component whose candidate and reference sets are both empty scores 1
//! for that order. Orders 1 through 4 are averaged.

use std::collections::{BTreeMap, BTreeSet};

use super::MetricsError;
use crate::corpus::tokenize;

const MAX_ORDER: usize = 4;

type Counts = BTreeMap<String, usize>;

fn ngram_counts(tokens: &[String], n: usize, scale: usize) -> Counts {
    let mut counts = Counts::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.join(" ")).or_default() += scale;
        }
    }
    counts
}

fn intersect(a: &Counts, b: &Counts) -> Counts {
    a.iter()
        .filter_map(|(g, &ca)| {
            let m = ca.min(b.get(g).copied().unwrap_or(0));
            (m > 0).then(|| (g.clone(), m))
        })
        .collect()
}

fn subtract(a: &Counts, b: &Counts) -> Counts {
    a.iter()
        .filter_map(|(g, &ca)| {
            let d = ca.saturating_sub(b.get(g).copied().unwrap_or(0));
            (d > 0).then(|| (g.clone(), d))
        })
        .collect()
}

/// Mean over `good`'s grams of good/base, divided by |base| instead of |good|.
fn ratio_score(good: &Counts, base: &Counts) -> f64 {
    if base.is_empty() {
        return 0.0;
    }
    let total: f64 = good.iter().map(|(g, &c)| c as f64 / base[g] as f64).sum();
    total / base.len() as f64
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn order_scores(source: &[String], output: &[String], references: &[Vec<String>], n: usize) -> [f64; 3] {
    let numref = references.len();
    let s = ngram_counts(source, n, numref);
    let c = ngram_counts(output, n, numref);
    let mut r = Counts::new();
    for reference in references {
        for (g, k) in ngram_counts(reference, n, 1) {
            *r.entry(g).or_default() += k;
        }
    }

    let keep_cand = intersect(&s, &c);
    let keep_ref = intersect(&s, &r);
    let keep = if keep_cand.is_empty() && keep_ref.is_empty() {
        1.0
    } else {
        let good = intersect(&keep_cand, &r);
        f1(ratio_score(&good, &keep_cand), ratio_score(&good, &keep_ref))
    };

    let del_cand = subtract(&s, &c);
    let del_ref = subtract(&s, &r);
    let del = if del_cand.is_empty() && del_ref.is_empty() {
        1.0
    } else {
        ratio_score(&subtract(&del_cand, &r), &del_cand)
    };

    let s_types: BTreeSet<&String> = s.keys().collect();
    let add_cand: BTreeSet<&String> = c.keys().filter(|g| !s_types.contains(g)).collect();
    let add_ref: BTreeSet<&String> = r.keys().filter(|g| !s_types.contains(g)).collect();
    let add = if add_cand.is_empty() && add_ref.is_empty() {
        1.0
    } else {
        let good = add_cand.intersection(&add_ref).count() as f64;
        let p = if add_cand.is_empty() {
            0.0
        } else {
            good / add_cand.len() as f64
        };
        let rc = if add_ref.is_empty() {
            0.0
        } else {
            good / add_ref.len() as f64
        };
        f1(p, rc)
    };

    [keep, del, add]
}

/// SARI in `[0, 100]` using the harness tokenizer.
pub fn sari<S: AsRef<str>>(source: &str, output: &str, references: &[S]) -> Result<f64, MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    let source = tokenize(source);
    let output = tokenize(output);
    let references: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    let mut sums = [0.0; 3];
    for n in 1..=MAX_ORDER {
        for (acc, v) in sums.iter_mut().zip(order_scores(&source, &output, &references, n)) {
            *acc += v;
        }
    }
    let mean = sums.iter().sum::<f64>() / (3.0 * MAX_ORDER as f64);
    Ok(100.0 * mean)
}
