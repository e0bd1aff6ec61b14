//! Answer metrics and seed-grid aggregation.

use std::collections::BTreeMap;

use crate::corpus::tokenize;
use crate::dataset::Answer;
use crate::predictor::Prediction;

mod aggregate;
mod sari;

pub use aggregate::{
    aggregate, mean_std, write_report_csv, Grouping, MetricsReport, ReportRow, RunResult, SubsetCell, REALIZED_RECALL,
};
pub use sari::sari;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no predictions to score")]
    Empty,
    #[error("every one of {0} predictions failed; nothing to score")]
    NoEvaluable(usize),
    #[error("no gold answer for '{0}'")]
    MissingGold(String),
    #[error("'{0}' is not a Boolean question")]
    NotBoolean(String),
    #[error("SARI needs at least one reference")]
    NoReferences,
    #[error("inconsistent run results: {0}")]
    Inconsistent(String),
}

/// Score of a prediction set together with how many items were skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub value: f64,
    pub n_evaluated: usize,
    pub n_failed: usize,
}

/// Fraction of exact Boolean matches among non-failed predictions.
pub fn accuracy(predictions: &[Prediction], gold: &BTreeMap<String, Answer>) -> Result<Scored, MetricsError> {
    score_with(predictions, gold, |p, g| match (p, g) {
        (Answer::Bool(p), Answer::Bool(g)) => Ok(if p == g { 1.0 } else { 0.0 }),
        _ => Err(()),
    })
}

/// Mean token F1 among non-failed predictions.
pub fn mean_token_f1(predictions: &[Prediction], gold: &BTreeMap<String, Answer>) -> Result<Scored, MetricsError> {
    score_with(predictions, gold, |p, g| Ok(token_f1(&p.to_string(), &g.to_string())))
}

fn score_with<F>(
    predictions: &[Prediction],
    gold: &BTreeMap<String, Answer>,
    item_score: F,
) -> Result<Scored, MetricsError>
where
    F: Fn(&Answer, &Answer) -> Result<f64, ()>,
{
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    let mut n_evaluated = 0;
    let mut n_failed = 0;
    for p in predictions {
        let g = gold
            .get(&p.qid)
            .ok_or_else(|| MetricsError::MissingGold(p.qid.clone()))?;
        match (&p.answer, p.failed) {
            (Some(a), false) => {
                total += item_score(a, g).map_err(|_| MetricsError::NotBoolean(p.qid.clone()))?;
                n_evaluated += 1;
            }
            _ => n_failed += 1,
        }
    }
    if n_evaluated == 0 {
        return Err(MetricsError::NoEvaluable(n_failed));
    }
    Ok(Scored {
        value: total / n_evaluated as f64,
        n_evaluated,
        n_failed,
    })
}

/// Harmonic mean of token precision and recall over multiset overlap.
/// Two empty strings score 1; exactly one empty scores 0.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred = tokenize(pred);
    let gold = tokenize(gold);
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut gold_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &gold {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = gold_counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
