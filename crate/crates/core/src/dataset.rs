//! Question records and their per-annotator gold evidence.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("malformed question at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate qid '{0}'")]
    DuplicateQid(String),
    #[error("question '{qid}': {reason}")]
    Invalid { qid: String, reason: String },
    #[error("unknown dataset tag '{0}'")]
    UnknownTag(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetTag {
    #[serde(rename = "SQ")]
    StrategyQa,
    #[serde(rename = "HPQ-bool")]
    HotpotBool,
    #[serde(rename = "HPQ-ext")]
    HotpotExtractive,
}

impl DatasetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::StrategyQa => "SQ",
            DatasetTag::HotpotBool => "HPQ-bool",
            DatasetTag::HotpotExtractive => "HPQ-ext",
        }
    }

    pub fn is_boolean(self) -> bool {
        !matches!(self, DatasetTag::HotpotExtractive)
    }

    /// Context size used for this dataset family (4 for SQ, 6 for HotpotQA).
    pub fn default_k(self) -> usize {
        match self {
            DatasetTag::StrategyQa => 4,
            DatasetTag::HotpotBool | DatasetTag::HotpotExtractive => 6,
        }
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetTag {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SQ" => Ok(DatasetTag::StrategyQa),
            "HPQ-bool" => Ok(DatasetTag::HotpotBool),
            "HPQ-ext" => Ok(DatasetTag::HotpotExtractive),
            other => Err(DatasetError::UnknownTag(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Bool(bool),
    Text(String),
}

impl Answer {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Answer::Bool(b) => Some(*b),
            Answer::Text(_) => None,
        }
    }

    pub fn is_bool(&self) -> bool {
        matches!(self, Answer::Bool(_))
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Bool(true) => f.write_str("yes"),
            Answer::Bool(false) => f.write_str("no"),
            Answer::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub annotator_id: u32,
    pub gold_pids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub qid: String,
    pub question: String,
    pub answer: Answer,
    pub dataset_tag: DatasetTag,
    pub annotations: Vec<EvidenceSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompositions: Option<Vec<Vec<String>>>,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: String| DatasetError::Invalid {
            qid: self.qid.clone(),
            reason,
        };
        if self.annotations.is_empty() {
            return Err(invalid("no evidence annotations".into()));
        }
        if self.dataset_tag.is_boolean() != self.answer.is_bool() {
            return Err(invalid(format!(
                "answer type does not match dataset tag {}",
                self.dataset_tag
            )));
        }
        for set in &self.annotations {
            if set.gold_pids.is_empty() {
                return Err(invalid(format!(
                    "annotator {} has no gold paragraphs",
                    set.annotator_id
                )));
            }
            let unique: BTreeSet<&String> = set.gold_pids.iter().collect();
            if unique.len() != set.gold_pids.len() {
                return Err(invalid(format!(
                    "annotator {} lists a gold pid twice",
                    set.annotator_id
                )));
            }
        }
        if let Some(decomps) = &self.decompositions {
            if decomps
                .iter()
                .any(|d| d.is_empty() || d.iter().any(|s| s.trim().is_empty()))
            {
                return Err(invalid("empty decomposition or sub-question".into()));
            }
        }
        Ok(())
    }

    /// Checks every annotated gold pid exists in `corpus`.
    pub fn check_resolvable(&self, corpus: &Corpus) -> Result<(), DatasetError> {
        for pid in self.gold_union() {
            if !corpus.contains(&pid) {
                return Err(DatasetError::Invalid {
                    qid: self.qid.clone(),
                    reason: format!("gold pid '{pid}' not in corpus"),
                });
            }
        }
        Ok(())
    }

    /// Union of every annotator's gold pids.
    pub fn gold_union(&self) -> BTreeSet<String> {
        self.annotations
            .iter()
            .flat_map(|a| a.gold_pids.iter().cloned())
            .collect()
    }

    /// Gold pids of all annotators in first-appearance order, deduplicated.
    pub fn gold_union_ordered(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.annotations
            .iter()
            .flat_map(|a| a.gold_pids.iter())
            .filter(|p| seen.insert(p.as_str()))
            .cloned()
            .collect()
    }

    pub fn annotation(&self, annotator_id: u32) -> Option<&EvidenceSet> {
        self.annotations.iter().find(|a| a.annotator_id == annotator_id)
    }
}

pub fn read_questions<R: BufRead>(reader: R) -> Result<Vec<QuestionRecord>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DatasetError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        record.validate()?;
        if !seen.insert(record.qid.clone()) {
            return Err(DatasetError::DuplicateQid(record.qid));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_questions(path: &Path) -> Result<Vec<QuestionRecord>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_questions(BufReader::new(file))
}

pub fn write_questions<W: Write>(records: &[QuestionRecord], mut writer: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
