//! Deterministic synthetic corpora and question sets.
//!
//! Each question is about one made-up entity. Its gold paragraphs and a
//! handful of same-entity distractors all mention the entity, so BM25 over
//! the question's decomposition surfaces topical non-gold paragraphs the
//! way a real retriever would. Filler paragraphs share only common words.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Paragraph};
use crate::dataset::{Answer, DatasetTag, EvidenceSet, QuestionRecord};
use crate::seed::derive_rng;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub dataset_tag: DatasetTag,
    pub questions: usize,
    pub annotators: usize,
    /// Candidate sizes for each annotator's gold set.
    pub gold_sizes: Vec<usize>,
    /// Gold paragraphs available per question; annotators pick from these.
    pub gold_candidates: usize,
    pub distractors_per_question: usize,
    pub filler_paragraphs: usize,
    pub yes_rate: f64,
    pub seed: u64,
}

impl FixtureSpec {
    /// Three annotators with one to three gold paragraphs each.
    pub fn strategyqa() -> Self {
        Self {
            dataset_tag: DatasetTag::StrategyQa,
            questions: 300,
            annotators: 3,
            gold_sizes: vec![1, 2, 3],
            gold_candidates: 4,
            distractors_per_question: 10,
            filler_paragraphs: 400,
            yes_rate: 0.55,
            seed: 17,
        }
    }

    /// One annotator with two supporting paragraphs.
    pub fn hotpot_bool() -> Self {
        Self {
            dataset_tag: DatasetTag::HotpotBool,
            questions: 300,
            annotators: 1,
            gold_sizes: vec![2],
            gold_candidates: 2,
            distractors_per_question: 12,
            filler_paragraphs: 400,
            yes_rate: 0.6,
            seed: 23,
        }
    }

    pub fn hotpot_extractive() -> Self {
        Self {
            dataset_tag: DatasetTag::HotpotExtractive,
            yes_rate: 0.0,
            seed: 29,
            ..Self::hotpot_bool()
        }
    }

    /// Gold sets of two to four paragraphs, for recall calibration.
    pub fn calibration() -> Self {
        Self {
            dataset_tag: DatasetTag::StrategyQa,
            questions: 500,
            annotators: 3,
            gold_sizes: vec![2, 3, 4],
            gold_candidates: 5,
            distractors_per_question: 10,
            filler_paragraphs: 200,
            yes_rate: 0.5,
            seed: 31,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub corpus: Corpus,
    pub questions: Vec<QuestionRecord>,
}

fn syllable(i: usize) -> String {
    let c = CONSONANTS[i % CONSONANTS.len()] as char;
    let v = VOWELS[(i / CONSONANTS.len()) % VOWELS.len()] as char;
    format!("{c}{v}")
}

fn random_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let n = CONSONANTS.len() * VOWELS.len();
    (0..syllables).map(|_| syllable(rng.random_range(0..n))).collect()
}

/// Unique per index; the trailing consonant keeps entity names out of the
/// vowel-final common vocabulary.
fn entity_name(i: usize) -> String {
    let n = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    let mut rest = i;
    for _ in 0..3 {
        out.push_str(&syllable(rest % n));
        rest /= n;
    }
    out.push('x');
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn sentence<R: Rng>(rng: &mut R, vocab: &[String], words: usize) -> String {
    (0..words)
        .map(|_| vocab.choose(rng).expect("vocabulary is non-empty").as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate(spec: &FixtureSpec) -> Fixture {
    let mut rng = derive_rng(spec.seed, spec.dataset_tag.as_str(), "fixture");
    let vocab: Vec<String> = (0..300).map(|_| random_word(&mut rng, 2)).collect();
    let attributes: Vec<String> = (0..120).map(|_| random_word(&mut rng, 3)).collect();
    let prefix = spec.dataset_tag.as_str().to_lowercase().replace('-', "");

    let mut paragraphs = Vec::new();
    let mut questions = Vec::new();
    for qi in 0..spec.questions {
        let entity = entity_name(qi);
        let qid = format!("{prefix}-q{qi:04}");
        let attrs: Vec<&String> = attributes.choose_multiple(&mut rng, 4).collect();
        let answer = if spec.dataset_tag.is_boolean() {
            Answer::Bool(rng.random_bool(spec.yes_rate))
        } else {
            Answer::Text(random_word(&mut rng, 2))
        };
        // A "no" question's second gold paragraph lacks the queried attribute.
        let mut facts = [attrs[0].clone(), attrs[1].clone(), attrs[2].clone()];
        match &answer {
            Answer::Bool(false) => facts[1] = attrs[3].clone(),
            Answer::Text(t) => facts[0] = format!("{} {t}", attrs[0]),
            Answer::Bool(true) => {}
        }

        let gold_pids: Vec<String> = (0..spec.gold_candidates)
            .map(|j| format!("{prefix}-q{qi:04}-g{j}"))
            .collect();
        for (j, pid) in gold_pids.iter().enumerate() {
            let attr = &facts[j % facts.len()];
            paragraphs.push(Paragraph {
                pid: pid.clone(),
                title: format!("{} {}", capitalize(&entity), j + 1),
                text: format!(
                    "{} {} {}. {}.",
                    capitalize(&entity),
                    attr,
                    sentence(&mut rng, &vocab, 6),
                    capitalize(&sentence(&mut rng, &vocab, 5))
                ),
            });
        }
        for j in 0..spec.distractors_per_question {
            paragraphs.push(Paragraph {
                pid: format!("{prefix}-q{qi:04}-d{j:02}"),
                title: capitalize(&entity),
                text: format!(
                    "{} {} {}.",
                    sentence(&mut rng, &vocab, 3),
                    entity,
                    sentence(&mut rng, &vocab, 6)
                ),
            });
        }

        let annotations = (0..spec.annotators)
            .map(|a| {
                let size = *spec.gold_sizes.choose(&mut rng).expect("gold_sizes is non-empty");
                let mut chosen: Vec<String> = gold_pids
                    .choose_multiple(&mut rng, size.min(gold_pids.len()))
                    .cloned()
                    .collect();
                chosen.sort();
                EvidenceSet {
                    annotator_id: a as u32,
                    gold_pids: chosen,
                }
            })
            .collect();

        let question = match spec.dataset_tag {
            DatasetTag::HotpotExtractive => format!("What {} does {} {}?", attrs[0], capitalize(&entity), attrs[1]),
            _ => format!("Does {} {} the {}?", capitalize(&entity), attrs[0], attrs[1]),
        };
        let mut subs = vec![
            format!("What is the {} of {}?", attrs[0], capitalize(&entity)),
            format!("Does {} have {}?", capitalize(&entity), attrs[1]),
        ];
        if qi % 3 == 0 {
            subs.push(format!("Is {} related to {}?", attrs[2], capitalize(&entity)));
        }
        questions.push(QuestionRecord {
            qid,
            question,
            answer,
            dataset_tag: spec.dataset_tag,
            annotations,
            decompositions: Some(vec![subs]),
        });
    }
    for f in 0..spec.filler_paragraphs {
        paragraphs.push(Paragraph {
            pid: format!("{prefix}-f{f:05}"),
            title: capitalize(&random_word(&mut rng, 2)),
            text: format!("{}.", capitalize(&sentence(&mut rng, &vocab, 9))),
        });
    }
    paragraphs.shuffle(&mut rng);
    let corpus = Corpus::from_paragraphs(paragraphs).expect("generated pids are unique");
    Fixture { corpus, questions }
}
