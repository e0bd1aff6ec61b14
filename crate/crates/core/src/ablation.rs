//! Contrastive input variants: question only (`q`), question plus the
//! poisoned context (`q+c`), plus gold only (`q+gd`), plus distractors only
//! (`q+ds`).

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, CorpusError};
use crate::dataset::{DatasetTag, QuestionRecord};
use crate::poisoning::PoisonedContext;

/// Separator between the question and each rendered paragraph.
pub const SEPARATOR: &str = "\n\n";

#[derive(Debug, thiserror::Error)]
pub enum AblationError {
    #[error("question '{0}': context holds no distractors for q+ds")]
    NoDistractors(String),
    #[error("question '{qid}': selected annotator {annotator} not found")]
    UnknownAnnotator { qid: String, annotator: u32 },
    #[error("context '{context}' does not belong to question '{question}'")]
    Mismatch { context: String, question: String },
    #[error("unknown ablation mode '{0}'")]
    UnknownMode(String),
    #[error("malformed ablation input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AblationMode {
    #[serde(rename = "q")]
    Question,
    #[serde(rename = "q+c")]
    Context,
    #[serde(rename = "q+gd")]
    Gold,
    #[serde(rename = "q+ds")]
    Distractors,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Question,
        AblationMode::Context,
        AblationMode::Gold,
        AblationMode::Distractors,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Question => "q",
            AblationMode::Context => "q+c",
            AblationMode::Gold => "q+gd",
            AblationMode::Distractors => "q+ds",
        }
    }

    /// Filename-safe spelling (`q`, `qc`, `qgd`, `qds`).
    pub fn slug(self) -> &'static str {
        match self {
            AblationMode::Question => "q",
            AblationMode::Context => "qc",
            AblationMode::Gold => "qgd",
            AblationMode::Distractors => "qds",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = AblationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.slug() == s)
            .ok_or_else(|| AblationError::UnknownMode(s.to_string()))
    }
}

/// One model input. Serializes as a line of `ablation_inputs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationInput {
    pub qid: String,
    pub mode: AblationMode,
    pub rendered_text: String,
    pub context_paragraph_ids: Vec<String>,
    pub question: String,
    /// Each context paragraph as handed to the predictor, parallel to
    /// `context_paragraph_ids`.
    pub context: Vec<String>,
    pub dataset_tag: DatasetTag,
    pub target_m: f64,
    pub data_seed: u64,
    /// Length of `rendered_text` under the harness tokenizer.
    pub rendered_tokens: usize,
}

/// Renders the question followed by each paragraph, separated by blank lines.
pub fn render(question: &str, paragraphs: &[String]) -> String {
    let mut out = question.to_string();
    for p in paragraphs {
        out.push_str(SEPARATOR);
        out.push_str(p);
    }
    out
}

pub fn make_input(
    record: &QuestionRecord,
    context: &PoisonedContext,
    corpus: &Corpus,
    mode: AblationMode,
) -> Result<AblationInput, AblationError> {
    if context.qid != record.qid {
        return Err(AblationError::Mismatch {
            context: context.qid.clone(),
            question: record.qid.clone(),
        });
    }
    let pids: Vec<String> = match mode {
        AblationMode::Question => Vec::new(),
        AblationMode::Context => context.paragraph_ids.clone(),
        AblationMode::Gold => record
            .annotation(context.selected_annotator)
            .ok_or_else(|| AblationError::UnknownAnnotator {
                qid: record.qid.clone(),
                annotator: context.selected_annotator,
            })?
            .gold_pids
            .clone(),
        AblationMode::Distractors => {
            let ds: Vec<String> = context.distractors(record).into_iter().map(str::to_string).collect();
            if ds.is_empty() {
                return Err(AblationError::NoDistractors(record.qid.clone()));
            }
            ds
        }
    };
    let paragraphs = pids
        .iter()
        .map(|p| corpus.get(p).map(|p| p.display_text()))
        .collect::<Result<Vec<_>, _>>()?;
    let rendered_text = render(&record.question, &paragraphs);
    Ok(AblationInput {
        qid: record.qid.clone(),
        mode,
        rendered_tokens: tokenize(&rendered_text).len(),
        rendered_text,
        context_paragraph_ids: pids,
        question: record.question.clone(),
        context: paragraphs,
        dataset_tag: record.dataset_tag,
        target_m: context.target_m,
        data_seed: context.data_seed,
    })
}

/// True when `input` satisfies its mode's content rule for `record`.
pub fn satisfies_mode(input: &AblationInput, record: &QuestionRecord, context: &PoisonedContext) -> bool {
    let gold = record.gold_union();
    match input.mode {
        AblationMode::Question => input.context_paragraph_ids.is_empty(),
        AblationMode::Context => input.context_paragraph_ids == context.paragraph_ids,
        AblationMode::Gold => record.annotation(context.selected_annotator).is_some_and(|a| {
            let want: BTreeSet<&String> = a.gold_pids.iter().collect();
            let got: BTreeSet<&String> = input.context_paragraph_ids.iter().collect();
            want == got
        }),
        AblationMode::Distractors => {
            !input.context_paragraph_ids.is_empty() && input.context_paragraph_ids.iter().all(|p| !gold.contains(p))
        }
    }
}

pub fn write_inputs<W: Write>(inputs: &[AblationInput], mut writer: W) -> std::io::Result<()> {
    for i in inputs {
        serde_json::to_writer(&mut writer, i)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_inputs<R: BufRead>(reader: R) -> Result<Vec<AblationInput>, AblationError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let malformed = |reason: String| AblationError::Malformed { line: idx + 1, reason };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(out)
}
