//! First-stage BM25 retrieval over decomposed questions, reranking,
//! recall@k and reranker training-pair export.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, CorpusError, InvertedIndex};
use crate::dataset::QuestionRecord;
use crate::seed::derive_rng;
use crate::transport::{Endpoint, Transport, TransportError, WireId};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("pid '{0}' is not in the index")]
    UnknownPid(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("decomposition for '{0}' has no sub-questions")]
    EmptyDecomposition(String),
    #[error("budget {budget} is smaller than the {subquestions} sub-questions")]
    BudgetTooSmall { budget: usize, subquestions: usize },
    #[error("recall is undefined for an empty gold set")]
    EmptyGold,
    #[error("scorer returned {got} scores for {expected} paragraphs")]
    ScoreCountMismatch { expected: usize, got: usize },
    #[error("reranker transport failed: {0}")]
    Scorer(#[from] TransportError),
    #[error("question '{0}' has no decomposition")]
    MissingDecomposition(String),
    #[error("question '{0}' has no gold paragraphs")]
    MissingGold(String),
    #[error("other-question negatives need at least two questions")]
    TooFewQuestions,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_weight(tf: u32, doc_len: u32, avg_doc_len: f64, params: Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = if avg_doc_len > 0.0 {
        doc_len as f64 / avg_doc_len
    } else {
        0.0
    };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub qid: String,
    pub subquestions: Vec<String>,
}

impl Decomposition {
    pub fn new(qid: impl Into<String>, subquestions: Vec<String>) -> Result<Self, RetrievalError> {
        let qid = qid.into();
        if subquestions.is_empty() || subquestions.iter().any(|s| s.trim().is_empty()) {
            return Err(RetrievalError::EmptyDecomposition(qid));
        }
        Ok(Self { qid, subquestions })
    }

    /// Built-in splitter: one sub-question per `?`-terminated segment.
    pub fn split_question(qid: impl Into<String>, question: &str) -> Result<Self, RetrievalError> {
        let subs: Vec<String> = question
            .split_inclusive('?')
            .map(str::trim)
            .filter(|s| !s.is_empty() && *s != "?")
            .map(str::to_string)
            .collect();
        Self::new(qid, subs)
    }

    /// The question's annotated decompositions flattened into one query list
    /// (duplicates removed), falling back to the built-in splitter.
    pub fn for_question(record: &QuestionRecord) -> Result<Self, RetrievalError> {
        match &record.decompositions {
            Some(ds) if !ds.is_empty() => {
                let mut seen = BTreeSet::new();
                let subs = ds
                    .iter()
                    .flatten()
                    .filter(|s| seen.insert(s.as_str()))
                    .cloned()
                    .collect();
                Self::new(record.qid.clone(), subs)
            }
            _ => Self::split_question(record.qid.clone(), &record.question),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPid {
    pub pid: String,
    pub score: f64,
}

/// Paragraphs ordered by descending score, ties by ascending pid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_tag: String,
    pub entries: Vec<ScoredPid>,
}

impl RankedList {
    /// Sorts `scores` into rank order. Pids must be unique.
    pub fn from_scores(query_tag: impl Into<String>, scores: Vec<(String, f64)>) -> Self {
        let mut entries: Vec<ScoredPid> = scores
            .into_iter()
            .map(|(pid, score)| ScoredPid { pid, score })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.pid.cmp(&b.pid)));
        debug_assert!(entries.windows(2).all(|w| w[0].pid != w[1].pid));
        Self {
            query_tag: query_tag.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.pid.as_str())
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    /// True when scores are non-increasing, ties ordered by pid, and pids unique.
    pub fn is_well_formed(&self) -> bool {
        let unique: BTreeSet<&str> = self.pids().collect();
        unique.len() == self.entries.len()
            && self
                .entries
                .windows(2)
                .all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].pid < w[1].pid))
    }
}

/// BM25 scorer over an immutable index.
#[derive(Debug, Clone, Copy)]
pub struct Bm25<'a> {
    index: &'a InvertedIndex,
    params: Bm25Params,
}

impl<'a> Bm25<'a> {
    pub fn new(index: &'a InvertedIndex, params: Bm25Params) -> Self {
        Self { index, params }
    }

    pub fn index(&self) -> &'a InvertedIndex {
        self.index
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    /// Score of one document. Repeated query tokens count once per occurrence.
    pub fn score(&self, query_tokens: &[String], pid: &str) -> Result<f64, RetrievalError> {
        let doc_len = self
            .index
            .doc_length(pid)
            .ok_or_else(|| RetrievalError::UnknownPid(pid.to_string()))?;
        let n = self.index.doc_count();
        let avg = self.index.avg_doc_len();
        Ok(query_tokens
            .iter()
            .map(|t| {
                let tf = self.index.term_freq(t, pid);
                if tf == 0 {
                    0.0
                } else {
                    idf(n, self.index.doc_freq(t)) * term_weight(tf, doc_len, avg, self.params)
                }
            })
            .sum())
    }

    /// Scores of every document sharing a term with the query.
    fn accumulate(&self, query_tokens: &[String]) -> HashMap<&'a str, f64> {
        let n = self.index.doc_count();
        let avg = self.index.avg_doc_len();
        let mut acc: HashMap<&'a str, f64> = HashMap::new();
        for t in query_tokens {
            let postings = self.index.postings(t);
            if postings.is_empty() {
                continue;
            }
            let w = idf(n, postings.len());
            for p in postings {
                let len = self.index.doc_length(&p.pid).unwrap_or(0);
                *acc.entry(p.pid.as_str()).or_insert(0.0) += w * term_weight(p.tf, len, avg, self.params);
            }
        }
        acc
    }

    /// Top-`k` documents with positive score.
    pub fn retrieve_topk(&self, query: &str, k: usize) -> Result<RankedList, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let tokens = tokenize(query);
        let scores = self
            .accumulate(&tokens)
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(pid, s)| (pid.to_string(), s))
            .collect();
        let mut list = RankedList::from_scores(query, scores);
        list.truncate(k);
        Ok(list)
    }

    /// Retrieves `budget / j` documents per sub-question and merges them,
    /// keeping each pid's best score.
    pub fn retrieve_for_decomposition(
        &self,
        decomp: &Decomposition,
        budget: usize,
    ) -> Result<RankedList, RetrievalError> {
        let j = decomp.subquestions.len();
        if j == 0 {
            return Err(RetrievalError::EmptyDecomposition(decomp.qid.clone()));
        }
        if budget < j {
            return Err(RetrievalError::BudgetTooSmall {
                budget,
                subquestions: j,
            });
        }
        let per_query = budget / j;
        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        for sub in &decomp.subquestions {
            for e in self.retrieve_topk(sub, per_query)?.entries {
                best.entry(e.pid).and_modify(|s| *s = s.max(e.score)).or_insert(e.score);
            }
        }
        Ok(RankedList::from_scores(decomp.qid.clone(), best.into_iter().collect()))
    }
}

/// Fraction of `gold` found among the first `k` entries.
pub fn recall_at_k(ranked: &RankedList, gold: &BTreeSet<String>, k: usize) -> Result<f64, RetrievalError> {
    if gold.is_empty() {
        return Err(RetrievalError::EmptyGold);
    }
    let hits = ranked.entries.iter().take(k).filter(|e| gold.contains(&e.pid)).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Relevance model used to reorder first-stage candidates.
pub trait RerankScorer: Send + Sync {
    /// One score per paragraph, parallel to `paragraphs`.
    fn scores(&self, query: &str, paragraphs: &[String]) -> Result<Vec<f64>, RetrievalError>;
}

/// Token-set Jaccard between query and paragraph.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardScorer;

pub fn jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = tokenize(a).into_iter().collect();
    let b: BTreeSet<String> = tokenize(b).into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

impl RerankScorer for JaccardScorer {
    fn scores(&self, query: &str, paragraphs: &[String]) -> Result<Vec<f64>, RetrievalError> {
        Ok(paragraphs.iter().map(|p| jaccard(query, p)).collect())
    }
}

#[derive(Debug, Serialize)]
struct RerankRequest<'a> {
    id: String,
    query: &'a str,
    paragraphs: &'a [String],
}

impl WireId for RerankRequest<'_> {
    fn wire_id(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Deserialize)]
struct RerankResponse {
    id: String,
    scores: Vec<f64>,
}

impl WireId for RerankResponse {
    fn wire_id(&self) -> &str {
        &self.id
    }
}

/// Out-of-process reranker speaking `{"id","query","paragraphs"}` →
/// `{"id","scores"}`. Over HTTP the route is `POST /v1/rerank`.
pub struct RemoteScorer {
    transport: Transport,
    counter: std::sync::atomic::AtomicU64,
}

impl RemoteScorer {
    pub fn connect(endpoint: &Endpoint) -> Result<Self, RetrievalError> {
        Ok(Self {
            transport: Transport::open(endpoint, "/v1/rerank")?,
            counter: Default::default(),
        })
    }
}

impl RerankScorer for RemoteScorer {
    fn scores(&self, query: &str, paragraphs: &[String]) -> Result<Vec<f64>, RetrievalError> {
        let n = self.counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let request = RerankRequest {
            id: format!("rr-{n}"),
            query,
            paragraphs,
        };
        let mut responses = self
            .transport
            .exchange::<_, RerankResponse>(std::slice::from_ref(&request))?;
        let response = responses.remove(&request.id).ok_or_else(|| TransportError::Protocol {
            reason: format!("no response for request '{}'", request.id),
            raw: String::new(),
        })?;
        Ok(response.scores)
    }
}

/// Reorders `candidates` by the scorer's scores (descending, ties by pid).
pub fn rerank(
    query: &str,
    candidates: &RankedList,
    corpus: &Corpus,
    scorer: &dyn RerankScorer,
) -> Result<RankedList, RetrievalError> {
    let texts = candidates
        .entries
        .iter()
        .map(|e| corpus.get(&e.pid).map(|p| p.display_text()))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = scorer.scores(query, &texts)?;
    if scores.len() != texts.len() {
        return Err(RetrievalError::ScoreCountMismatch {
            expected: texts.len(),
            got: scores.len(),
        });
    }
    Ok(RankedList::from_scores(
        candidates.query_tag.clone(),
        candidates.pids().map(str::to_string).zip(scores).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativeKind {
    #[serde(rename = "high-bm25-nongold")]
    HighBm25NonGold,
    #[serde(rename = "gold-of-other-question")]
    GoldOfOtherQuestion,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankPair {
    pub query: String,
    pub pid: String,
    pub label: PairLabel,
    pub negative_kind: NegativeKind,
}

/// How many negatives of each kind accompany every positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRatio {
    pub bm25_negatives: usize,
    pub other_gold_negatives: usize,
    pub seed: u64,
}

impl Default for PairRatio {
    fn default() -> Self {
        Self {
            bm25_negatives: 1,
            other_gold_negatives: 1,
            seed: 0,
        }
    }
}

/// Builds reranker training pairs.
///
/// Positives pair every sub-question with every gold paragraph of its
/// question. Each positive is followed by its negatives: the next unused
/// high-BM25 non-gold paragraphs for that sub-question, then gold
/// paragraphs of randomly chosen other questions (never gold for the
/// source question). BM25 negatives run out silently when retrieval has no
/// more non-gold hits.
pub fn export_rerank_pairs(
    questions: &[QuestionRecord],
    bm25: &Bm25<'_>,
    ratio: PairRatio,
) -> Result<Vec<RerankPair>, RetrievalError> {
    if ratio.other_gold_negatives > 0 && questions.len() < 2 {
        return Err(RetrievalError::TooFewQuestions);
    }
    let golds: Vec<Vec<String>> = questions.iter().map(QuestionRecord::gold_union_ordered).collect();
    let mut out = Vec::new();
    for (qi, q) in questions.iter().enumerate() {
        let decomp = match &q.decompositions {
            Some(d) if !d.is_empty() => Decomposition::for_question(q)?,
            _ => return Err(RetrievalError::MissingDecomposition(q.qid.clone())),
        };
        let gold = &golds[qi];
        if gold.is_empty() {
            return Err(RetrievalError::MissingGold(q.qid.clone()));
        }
        let gold_set: BTreeSet<&str> = gold.iter().map(String::as_str).collect();
        let mut rng = derive_rng(ratio.seed, &q.qid, "rerank-pairs");

        for sub in &decomp.subquestions {
            let hard_negatives: Vec<String> = if ratio.bm25_negatives > 0 {
                let depth = ratio.bm25_negatives * gold.len() + gold.len();
                bm25.retrieve_topk(sub, depth)?
                    .entries
                    .into_iter()
                    .filter(|e| !gold_set.contains(e.pid.as_str()))
                    .map(|e| e.pid)
                    .collect()
            } else {
                Vec::new()
            };
            for (gi, g) in gold.iter().enumerate() {
                out.push(RerankPair {
                    query: sub.clone(),
                    pid: g.clone(),
                    label: PairLabel::Positive,
                    negative_kind: NegativeKind::None,
                });
                let start = (gi * ratio.bm25_negatives).min(hard_negatives.len());
                let end = ((gi + 1) * ratio.bm25_negatives).min(hard_negatives.len());
                for pid in &hard_negatives[start..end] {
                    out.push(RerankPair {
                        query: sub.clone(),
                        pid: pid.clone(),
                        label: PairLabel::Negative,
                        negative_kind: NegativeKind::HighBm25NonGold,
                    });
                }
                for _ in 0..ratio.other_gold_negatives {
                    if let Some(pid) = draw_other_gold(&mut rng, qi, &golds, &gold_set) {
                        out.push(RerankPair {
                            query: sub.clone(),
                            pid,
                            label: PairLabel::Negative,
                            negative_kind: NegativeKind::GoldOfOtherQuestion,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn draw_other_gold<R: Rng>(
    rng: &mut R,
    own: usize,
    golds: &[Vec<String>],
    own_gold: &BTreeSet<&str>,
) -> Option<String> {
    let eligible = |i: usize| -> Vec<&String> { golds[i].iter().filter(|p| !own_gold.contains(p.as_str())).collect() };
    let first = loop {
        let i = rng.random_range(0..golds.len());
        if i != own {
            break i;
        }
    };
    if let Some(p) = eligible(first).choose(rng) {
        return Some((*p).clone());
    }
    // the drawn question shares all of its gold with ours; fall back to a scan
    let mut others: Vec<usize> = (0..golds.len()).filter(|&i| i != own && i != first).collect();
    rand::seq::SliceRandom::shuffle(others.as_mut_slice(), rng);
    others
        .into_iter()
        .find_map(|i| eligible(i).choose(rng).map(|p| (*p).clone()))
}

pub fn write_pairs<W: Write>(pairs: &[RerankPair], mut writer: W) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Paragraph;
    use crate::dataset::{Answer, DatasetTag, EvidenceSet};

    fn corpus(docs: &[(&str, &str)]) -> Corpus {
        Corpus::from_paragraphs(docs.iter().map(|(pid, text)| Paragraph {
            pid: pid.to_string(),
            title: String::new(),
            text: text.to_string(),
        }))
        .unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn hand_computed_ln2() {
        let c = corpus(&[("d1", "cat sat"), ("d2", "dog sat")]);
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());
        let s1 = bm25.score(&toks("cat"), "d1").unwrap();
        assert!((s1 - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(bm25.score(&toks("cat"), "d2").unwrap(), 0.0);
        assert!(matches!(
            bm25.score(&toks("cat"), "d9"),
            Err(RetrievalError::UnknownPid(_))
        ));
    }

    #[test]
    fn no_overlap_scores_zero() {
        let c = corpus(&[("d1", "cat sat"), ("d2", "dog sat")]);
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());
        for d in ["d1", "d2"] {
            assert_eq!(bm25.score(&toks("zebra quokka"), d).unwrap(), 0.0);
        }
        assert!(bm25.retrieve_topk("zebra", 3).unwrap().is_empty());
    }

    #[test]
    fn b_zero_ignores_length() {
        let c = corpus(&[("short", "cat x"), ("long", "cat y z w v u t s")]);
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params { k1: 1.2, b: 0.0 });
        let a = bm25.score(&toks("cat"), "short").unwrap();
        let b = bm25.score(&toks("cat"), "long").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn topk_single_match_and_ties() {
        let c = corpus(&[("b", "apple pie"), ("a", "apple pie"), ("c", "banana")]);
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());
        let one = bm25.retrieve_topk("banana", 5).unwrap();
        assert_eq!(one.len(), 1);
        let tied = bm25.retrieve_topk("apple", 5).unwrap();
        assert_eq!(tied.pids().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(tied.entries[0].score, tied.entries[1].score);
        assert!(matches!(bm25.retrieve_topk("apple", 0), Err(RetrievalError::ZeroK)));
    }

    #[test]
    fn decomposition_budget_split_and_dedup() {
        let docs: Vec<(String, String)> = (0..30)
            .map(|i| (format!("d{i:02}"), format!("alpha beta w{i}")))
            .collect();
        let refs: Vec<(&str, &str)> = docs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let c = corpus(&refs);
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());

        let d = Decomposition::new("q", vec!["alpha".into(), "w3 beta".into()]).unwrap();
        let pool = bm25.retrieve_for_decomposition(&d, 10).unwrap();
        // 5 per sub-question; d03 appears in both lists and is kept once
        let alpha = bm25.retrieve_topk("alpha", 5).unwrap();
        let second = bm25.retrieve_topk("w3 beta", 5).unwrap();
        let union: BTreeSet<&str> = alpha.pids().chain(second.pids()).collect();
        assert_eq!(pool.len(), union.len());
        assert!(pool.is_well_formed());
        let d03 = pool.entries.iter().find(|e| e.pid == "d03").unwrap();
        let best = second.entries.iter().find(|e| e.pid == "d03").unwrap().score;
        assert_eq!(d03.score, best);

        let single = Decomposition::new("q", vec!["alpha w7".into()]).unwrap();
        assert_eq!(
            bm25.retrieve_for_decomposition(&single, 4).unwrap().entries,
            bm25.retrieve_topk("alpha w7", 4).unwrap().entries
        );
        assert!(matches!(
            bm25.retrieve_for_decomposition(&d, 1),
            Err(RetrievalError::BudgetTooSmall { .. })
        ));
        assert!(Decomposition::new("q", vec![]).is_err());
    }

    #[test]
    fn budget_400_over_two_subquestions_gives_200_each() {
        let docs: Vec<(String, String)> = (0..500)
            .map(|i| (format!("d{i:03}"), format!("common{} filler{i}", i % 2)))
            .collect();
        let refs: Vec<(&str, &str)> = docs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let c = corpus(&refs);
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());
        let d = Decomposition::new("q", vec!["common0".into(), "common1".into()]).unwrap();
        let pool = bm25.retrieve_for_decomposition(&d, 400).unwrap();
        // disjoint vocabularies, 250 matches each, capped at 200 apiece
        assert_eq!(pool.len(), 400);
    }

    #[test]
    fn splitter_cuts_on_question_marks() {
        let d = Decomposition::split_question("q", "Who wrote it? When was it published?").unwrap();
        assert_eq!(d.subquestions, vec!["Who wrote it?", "When was it published?"]);
        let d = Decomposition::split_question("q", "no mark here").unwrap();
        assert_eq!(d.subquestions, vec!["no mark here"]);
        assert!(Decomposition::split_question("q", " ? ").is_err());
    }

    #[test]
    fn recall_examples() {
        let ranked = RankedList::from_scores(
            "t",
            vec![
                ("a".into(), 4.0),
                ("c".into(), 3.0),
                ("b".into(), 2.0),
                ("d".into(), 1.0),
            ],
        );
        let gold: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(recall_at_k(&ranked, &gold, 2).unwrap(), 0.5);
        assert_eq!(recall_at_k(&ranked, &gold, 3).unwrap(), 1.0);
        let other: BTreeSet<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(recall_at_k(&ranked, &other, 10).unwrap(), 0.0);
        assert!(matches!(
            recall_at_k(&ranked, &BTreeSet::new(), 1),
            Err(RetrievalError::EmptyGold)
        ));
    }

    struct FixedScorer(Vec<f64>);

    impl RerankScorer for FixedScorer {
        fn scores(&self, _: &str, _: &[String]) -> Result<Vec<f64>, RetrievalError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn rerank_identity_reverse_and_mismatch() {
        let c = corpus(&[("a", "one"), ("b", "two"), ("c", "three")]);
        let cands = RankedList::from_scores("q", vec![("a".into(), 3.0), ("b".into(), 2.0), ("c".into(), 1.0)]);
        let same = rerank("q", &cands, &c, &FixedScorer(vec![3.0, 2.0, 1.0])).unwrap();
        assert_eq!(same.pids().collect::<Vec<_>>(), vec!["a", "b", "c"]);
        let rev = rerank("q", &cands, &c, &FixedScorer(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(rev.pids().collect::<Vec<_>>(), vec!["c", "b", "a"]);
        assert!(matches!(
            rerank("q", &cands, &c, &FixedScorer(vec![1.0])),
            Err(RetrievalError::ScoreCountMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn jaccard_fallback_matches_hand_ranking() {
        // query tokens {who, painted, the, mona, lisa}
        let c = corpus(&[
            ("p1", "Leonardo painted the Mona Lisa"), // {leonardo,painted,the,mona,lisa}: 4/6
            ("p2", "The Mona Lisa hangs in Paris"),   // {the,mona,lisa,hangs,in,paris}: 3/8
            ("p3", "who painted"),                    // 2/5
            ("p4", "bananas are yellow"),             // 0/8
            ("p5", "the the the"),                    // 1/5
        ]);
        let cands = RankedList::from_scores(
            "q",
            ["p1", "p2", "p3", "p4", "p5"]
                .iter()
                .map(|p| (p.to_string(), 1.0))
                .collect(),
        );
        let out = rerank("Who painted the Mona Lisa?", &cands, &c, &JaccardScorer).unwrap();
        assert_eq!(out.pids().collect::<Vec<_>>(), vec!["p1", "p3", "p2", "p5", "p4"]);
        let expect = [4.0 / 6.0, 2.0 / 5.0, 3.0 / 8.0, 1.0 / 5.0, 0.0];
        for (e, want) in out.entries.iter().zip(expect) {
            assert!((e.score - want).abs() < 1e-12);
        }
    }

    fn question(qid: &str, subs: &[&str], gold: &[&str]) -> QuestionRecord {
        QuestionRecord {
            qid: qid.into(),
            question: subs.join(" "),
            answer: Answer::Bool(true),
            dataset_tag: DatasetTag::StrategyQa,
            annotations: vec![EvidenceSet {
                annotator_id: 0,
                gold_pids: gold.iter().map(|s| s.to_string()).collect(),
            }],
            decompositions: Some(vec![subs.iter().map(|s| s.to_string()).collect()]),
        }
    }

    fn pair_fixture() -> (Corpus, Vec<QuestionRecord>) {
        let c = corpus(&[
            ("g1", "caesar children julia"),
            ("g2", "genghis khan children"),
            ("n1", "caesar rome senate"),
            ("n2", "khan mongol empire"),
            ("n3", "children of rome"),
            ("h1", "eiffel tower paris"),
            ("h2", "tower height metres"),
        ]);
        let qs = vec![
            question("q1", &["caesar children", "khan children"], &["g1", "g2"]),
            question("q2", &["eiffel tower height"], &["h1", "h2"]),
        ];
        (c, qs)
    }

    #[test]
    fn export_counts() {
        let (c, qs) = pair_fixture();
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());
        let pairs = export_rerank_pairs(
            &qs[..1],
            &bm25,
            PairRatio {
                bm25_negatives: 1,
                other_gold_negatives: 0,
                seed: 1,
            },
        )
        .unwrap();
        let pos = pairs.iter().filter(|p| p.label == PairLabel::Positive).count();
        assert_eq!(pos, 4);

        let pairs = export_rerank_pairs(&qs, &bm25, PairRatio::default()).unwrap();
        let q1: Vec<&RerankPair> = pairs
            .iter()
            .filter(|p| p.query.contains("caesar") || p.query.contains("khan"))
            .collect();
        assert_eq!(q1.iter().filter(|p| p.label == PairLabel::Positive).count(), 4);
        assert_eq!(q1.iter().filter(|p| p.label == PairLabel::Negative).count(), 8);
        for p in &pairs {
            assert_eq!(p.label == PairLabel::Positive, p.negative_kind == NegativeKind::None);
        }
    }

    #[test]
    fn export_single_question_with_other_gold_fails() {
        let (c, qs) = pair_fixture();
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());
        assert!(matches!(
            export_rerank_pairs(&qs[..1], &bm25, PairRatio::default()),
            Err(RetrievalError::TooFewQuestions)
        ));
    }

    #[test]
    fn export_is_deterministic() {
        let (c, qs) = pair_fixture();
        let index = InvertedIndex::build(&c).unwrap();
        let bm25 = Bm25::new(&index, Bm25Params::default());
        let a = export_rerank_pairs(&qs, &bm25, PairRatio::default()).unwrap();
        let b = export_rerank_pairs(&qs, &bm25, PairRatio::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_pairs(&a, &mut buf).unwrap();
        let first: serde_json::Value =
            serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(first["label"], "positive");
        assert_eq!(first["negative_kind"], "none");
    }
}
