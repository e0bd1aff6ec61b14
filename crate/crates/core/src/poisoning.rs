//! Recall-controlled ("poisoned") context construction.
//!
//! For one question we pick an annotator, keep each of their gold
//! paragraphs independently with probability `m`, fill the remaining slots
//! with the best-ranked non-gold distractors, and shuffle. The expected
//! fraction of the annotator's gold that survives is exactly `m`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EvidenceSet, QuestionRecord};
use crate::retrieval::RankedList;
use crate::seed::derive_rng;

#[derive(Debug, thiserror::Error)]
pub enum PoisonError {
    #[error("question '{qid}': only {available} distractors after removing gold, need {needed}")]
    InsufficientDistractors {
        qid: String,
        available: usize,
        needed: usize,
    },
    #[error("target recall {0} is outside [0, 1]")]
    InvalidRecall(f64),
    #[error("context size k must be at least 1")]
    ZeroK,
    #[error("question '{0}' has no annotations")]
    NoAnnotations(String),
    #[error("question '{0}' has no distractor pool")]
    MissingPool(String),
    #[error("context record for '{qid}' is inconsistent: {reason}")]
    InconsistentRecord { qid: String, reason: String },
    #[error("malformed context record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetLabel {
    Easy,
    Med,
    Hard,
}

impl SubsetLabel {
    pub const ALL: [SubsetLabel; 3] = [SubsetLabel::Easy, SubsetLabel::Med, SubsetLabel::Hard];

    pub fn from_recall(recall: f64) -> Self {
        if recall >= 1.0 {
            SubsetLabel::Easy
        } else if recall <= 0.0 {
            SubsetLabel::Hard
        } else {
            SubsetLabel::Med
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubsetLabel::Easy => "easy",
            SubsetLabel::Med => "med",
            SubsetLabel::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoisonedContext {
    pub qid: String,
    pub paragraph_ids: Vec<String>,
    pub selected_annotator: u32,
    pub retained_gold: BTreeSet<String>,
    pub realized_recall: f64,
    pub target_m: f64,
    pub subset: SubsetLabel,
    pub data_seed: u64,
}

impl PoisonedContext {
    /// Context pids that are not gold for any annotator, in context order.
    pub fn distractors<'a>(&'a self, record: &QuestionRecord) -> Vec<&'a str> {
        let gold = record.gold_union();
        self.paragraph_ids
            .iter()
            .filter(|p| !gold.contains(*p))
            .map(String::as_str)
            .collect()
    }

    pub fn to_record(&self) -> ContextRecord {
        ContextRecord {
            qid: self.qid.clone(),
            target_m: self.target_m,
            data_seed: self.data_seed,
            paragraph_ids: self.paragraph_ids.clone(),
            selected_annotator: self.selected_annotator,
            realized_recall: self.realized_recall,
            subset: self.subset,
        }
    }

    /// Rebuilds a context from its file row, checking it against the question.
    pub fn from_record(rec: ContextRecord, question: &QuestionRecord) -> Result<Self, PoisonError> {
        let bad = |reason: String| PoisonError::InconsistentRecord {
            qid: rec.qid.clone(),
            reason,
        };
        if rec.qid != question.qid {
            return Err(bad(format!("paired with question '{}'", question.qid)));
        }
        let evidence = question
            .annotation(rec.selected_annotator)
            .ok_or_else(|| bad(format!("unknown annotator {}", rec.selected_annotator)))?;
        let in_context: BTreeSet<&str> = rec.paragraph_ids.iter().map(String::as_str).collect();
        if in_context.len() != rec.paragraph_ids.len() {
            return Err(bad("duplicate paragraph ids".into()));
        }
        let retained_gold: BTreeSet<String> = evidence
            .gold_pids
            .iter()
            .filter(|p| in_context.contains(p.as_str()))
            .cloned()
            .collect();
        let recall = retained_gold.len() as f64 / evidence.gold_pids.len() as f64;
        if recall != rec.realized_recall || SubsetLabel::from_recall(recall) != rec.subset {
            return Err(bad("recorded recall or subset disagrees with its paragraphs".into()));
        }
        Ok(Self {
            qid: rec.qid,
            paragraph_ids: rec.paragraph_ids,
            selected_annotator: rec.selected_annotator,
            retained_gold,
            realized_recall: recall,
            target_m: rec.target_m,
            subset: rec.subset,
            data_seed: rec.data_seed,
        })
    }
}

/// One line of `contexts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub qid: String,
    pub target_m: f64,
    pub data_seed: u64,
    pub paragraph_ids: Vec<String>,
    pub selected_annotator: u32,
    pub realized_recall: f64,
    pub subset: SubsetLabel,
}

pub fn write_contexts<W: Write>(contexts: &[PoisonedContext], mut writer: W) -> std::io::Result<()> {
    for c in contexts {
        serde_json::to_writer(&mut writer, &c.to_record())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_context_records<R: BufRead>(reader: R) -> Result<Vec<ContextRecord>, PoisonError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let malformed = |reason: String| PoisonError::Malformed { line: idx + 1, reason };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(out)
}

/// A uniformly random annotator's evidence set.
pub fn select_annotator<'r, R: Rng + ?Sized>(
    record: &'r QuestionRecord,
    rng: &mut R,
) -> Result<&'r EvidenceSet, PoisonError> {
    record
        .annotations
        .choose(rng)
        .ok_or_else(|| PoisonError::NoAnnotations(record.qid.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextParams {
    /// Retention probability per gold paragraph, equal to the expected recall.
    pub target_m: f64,
    pub k: usize,
    pub data_seed: u64,
}

impl ContextParams {
    pub fn validate(&self) -> Result<(), PoisonError> {
        if !(0.0..=1.0).contains(&self.target_m) {
            return Err(PoisonError::InvalidRecall(self.target_m));
        }
        if self.k == 0 {
            return Err(PoisonError::ZeroK);
        }
        Ok(())
    }
}

/// Builds one poisoned context from `evidence`.
///
/// `rng` drives gold retention and then the final shuffle. When more gold
/// survives than fits in `k`, a random `k` of the survivors are kept.
pub fn build_context<R: Rng + ?Sized>(
    record: &QuestionRecord,
    evidence: &EvidenceSet,
    distractor_pool: &RankedList,
    params: ContextParams,
    rng: &mut R,
) -> Result<PoisonedContext, PoisonError> {
    params.validate()?;
    let k = params.k;
    let gold_union = record.gold_union();
    let distractors: Vec<&str> = distractor_pool.pids().filter(|p| !gold_union.contains(*p)).collect();
    if distractors.len() < k {
        return Err(PoisonError::InsufficientDistractors {
            qid: record.qid.clone(),
            available: distractors.len(),
            needed: k,
        });
    }

    let mut retained: Vec<&String> = evidence
        .gold_pids
        .iter()
        .filter(|_| rng.random::<f64>() < params.target_m)
        .collect();
    if retained.len() > k {
        retained.shuffle(rng);
        retained.truncate(k);
    }
    let retained_gold: BTreeSet<String> = retained.iter().map(|p| (*p).clone()).collect();

    let mut paragraph_ids: Vec<String> = retained.into_iter().cloned().collect();
    let fill = k - paragraph_ids.len();
    paragraph_ids.extend(distractors.into_iter().take(fill).map(str::to_string));
    paragraph_ids.shuffle(rng);

    let realized_recall = retained_gold.len() as f64 / evidence.gold_pids.len() as f64;
    Ok(PoisonedContext {
        qid: record.qid.clone(),
        paragraph_ids,
        selected_annotator: evidence.annotator_id,
        retained_gold,
        realized_recall,
        target_m: params.target_m,
        subset: SubsetLabel::from_recall(realized_recall),
        data_seed: params.data_seed,
    })
}

/// `|gold ∩ context| / k_i` for the given annotator's evidence.
pub fn realized_recall(context: &PoisonedContext, evidence: &EvidenceSet) -> f64 {
    if evidence.gold_pids.is_empty() {
        return 0.0;
    }
    let present = evidence
        .gold_pids
        .iter()
        .filter(|p| context.paragraph_ids.contains(p))
        .count();
    present as f64 / evidence.gold_pids.len() as f64
}

pub fn stratify(context: &PoisonedContext) -> SubsetLabel {
    SubsetLabel::from_recall(context.realized_recall)
}

/// Distractor pools keyed by qid.
pub type DistractorPools = BTreeMap<String, RankedList>;

/// Generates contexts with per-question random streams derived from
/// `(data_seed, qid, purpose)`, so output is independent of scheduling.
#[derive(Debug, Clone, Copy)]
pub struct Poisoner {
    params: ContextParams,
}

impl Poisoner {
    pub fn new(params: ContextParams) -> Result<Self, PoisonError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> ContextParams {
        self.params
    }

    fn pool<'p>(&self, record: &QuestionRecord, pools: &'p DistractorPools) -> Result<&'p RankedList, PoisonError> {
        pools
            .get(&record.qid)
            .ok_or_else(|| PoisonError::MissingPool(record.qid.clone()))
    }

    fn build_for(
        &self,
        record: &QuestionRecord,
        evidence: &EvidenceSet,
        pool: &RankedList,
    ) -> Result<PoisonedContext, PoisonError> {
        let mut rng = derive_rng(
            self.params.data_seed,
            &record.qid,
            &format!("context/{}", evidence.annotator_id),
        );
        build_context(record, evidence, pool, self.params, &mut rng)
    }

    /// One context for `record`, from a randomly selected annotator.
    pub fn poison(&self, record: &QuestionRecord, pools: &DistractorPools) -> Result<PoisonedContext, PoisonError> {
        let pool = self.pool(record, pools)?;
        let mut rng = derive_rng(self.params.data_seed, &record.qid, "annotator");
        let evidence = select_annotator(record, &mut rng)?;
        self.build_for(record, evidence, pool)
    }

    /// Poisons every record in parallel; results keep input order.
    pub fn poison_all(
        &self,
        records: &[QuestionRecord],
        pools: &DistractorPools,
    ) -> Vec<Result<PoisonedContext, PoisonError>> {
        records.par_iter().map(|r| self.poison(r, pools)).collect()
    }

    /// One independently poisoned context per (question, annotator) pair.
    pub fn build_mixed_annotation_examples(
        &self,
        records: &[QuestionRecord],
        pools: &DistractorPools,
    ) -> Result<Vec<PoisonedContext>, PoisonError> {
        let per_question: Vec<Vec<PoisonedContext>> = records
            .par_iter()
            .map(|r| {
                let pool = self.pool(r, pools)?;
                r.annotations
                    .iter()
                    .map(|ev| self.build_for(r, ev, pool))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(per_question.into_iter().flatten().collect())
    }
}
