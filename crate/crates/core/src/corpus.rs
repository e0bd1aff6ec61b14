//! Paragraph corpus, tokenizer and inverted index.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::seed::sha256_hex;

pub const INDEX_FORMAT: &str = "rql-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate pid '{pid}' at line {line}")]
    DuplicatePid { pid: String, line: usize },
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("paragraph '{0}' not found")]
    NotFound(String),
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("invalid index file at line {line}: {reason}")]
    IndexFormat { line: usize, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Lowercases `text` and splits on every maximal run of non-alphanumeric
/// characters. Empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub pid: String,
    pub title: String,
    pub text: String,
}

impl Paragraph {
    /// Tokens used for indexing: title tokens followed by body tokens.
    pub fn tokens(&self) -> Vec<String> {
        let mut tokens = tokenize(&self.title);
        tokens.extend(tokenize(&self.text));
        tokens
    }

    /// The single-string form handed to predictors and rerankers.
    pub fn display_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            format!("{}: {}", self.title, self.text)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    paragraphs: BTreeMap<String, Paragraph>,
    doc_lengths: BTreeMap<String, u32>,
    avg_doc_len: f64,
}

impl Corpus {
    /// Ingests `{"pid","title","text"}` JSON lines. Blank lines are skipped.
    pub fn ingest<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut paragraphs = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| CorpusError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let paragraph: Paragraph = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
            if paragraph.text.trim().is_empty() {
                return Err(CorpusError::Malformed {
                    line: line_no,
                    reason: format!("paragraph '{}' has empty text", paragraph.pid),
                });
            }
            if paragraphs.contains_key(&paragraph.pid) {
                return Err(CorpusError::DuplicatePid {
                    pid: paragraph.pid,
                    line: line_no,
                });
            }
            paragraphs.insert(paragraph.pid.clone(), paragraph);
        }
        Ok(Self::from_map(paragraphs))
    }

    pub fn from_paragraphs<I>(paragraphs: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = Paragraph>,
    {
        let mut map = BTreeMap::new();
        for (idx, p) in paragraphs.into_iter().enumerate() {
            if p.text.trim().is_empty() {
                return Err(CorpusError::Malformed {
                    line: idx + 1,
                    reason: format!("paragraph '{}' has empty text", p.pid),
                });
            }
            if map.contains_key(&p.pid) {
                return Err(CorpusError::DuplicatePid {
                    pid: p.pid,
                    line: idx + 1,
                });
            }
            map.insert(p.pid.clone(), p);
        }
        Ok(Self::from_map(map))
    }

    fn from_map(paragraphs: BTreeMap<String, Paragraph>) -> Self {
        let doc_lengths: BTreeMap<String, u32> = paragraphs
            .iter()
            .map(|(pid, p)| (pid.clone(), p.tokens().len() as u32))
            .collect();
        let total: u64 = doc_lengths.values().map(|&l| l as u64).sum();
        let avg_doc_len = if doc_lengths.is_empty() {
            0.0
        } else {
            total as f64 / doc_lengths.len() as f64
        };
        Self {
            paragraphs,
            doc_lengths,
            avg_doc_len,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::ingest(BufReader::new(file))
    }

    /// Writes the corpus back out as JSON lines in pid order.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for p in self.paragraphs.values() {
            serde_json::to_writer(&mut writer, p)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    pub fn doc_count(&self) -> usize {
        self.paragraphs.len()
    }

    /// Mean token count per paragraph; 0 for an empty corpus.
    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn get(&self, pid: &str) -> Result<&Paragraph, CorpusError> {
        self.paragraphs
            .get(pid)
            .ok_or_else(|| CorpusError::NotFound(pid.to_string()))
    }

    pub fn contains(&self, pid: &str) -> bool {
        self.paragraphs.contains_key(pid)
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.paragraphs.values()
    }

    pub fn doc_length(&self, pid: &str) -> Option<u32> {
        self.doc_lengths.get(pid).copied()
    }

    /// SHA-256 over the canonical JSONL form.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        sha256_hex(&buf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub pid: String,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<String, u32>,
    avg_doc_len: f64,
    built_from: String,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    doc_count: usize,
    avg_doc_len: f64,
    built_from: String,
    doc_lengths: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct PostingRecord {
    term: String,
    postings: Vec<(String, u32)>,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Result<Self, CorpusError> {
        if corpus.doc_count() == 0 {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        // paragraphs iterate in pid order, so every posting list comes out sorted
        for p in corpus.paragraphs() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in p.tokens() {
                *counts.entry(token).or_default() += 1;
            }
            for (term, tf) in counts {
                postings
                    .entry(term)
                    .or_default()
                    .push(Posting { pid: p.pid.clone(), tf });
            }
        }
        Ok(Self {
            postings,
            doc_lengths: corpus.doc_lengths.clone(),
            avg_doc_len: corpus.avg_doc_len,
            built_from: corpus.fingerprint(),
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    /// Frequency of `term` in `pid`, 0 when absent.
    pub fn term_freq(&self, term: &str, pid: &str) -> u32 {
        let list = self.postings(term);
        list.binary_search_by(|p| p.pid.as_str().cmp(pid))
            .map(|i| list[i].tf)
            .unwrap_or(0)
    }

    pub fn doc_length(&self, pid: &str) -> Option<u32> {
        self.doc_lengths.get(pid).copied()
    }

    pub fn pids(&self) -> impl Iterator<Item = &str> {
        self.doc_lengths.keys().map(String::as_str)
    }

    /// Writes the header line followed by one posting record per term.
    pub fn write_to<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        let header = IndexHeader {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            doc_count: self.doc_count(),
            avg_doc_len: self.avg_doc_len,
            built_from: self.built_from.clone(),
            doc_lengths: self.doc_lengths.clone(),
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        for (term, list) in &self.postings {
            let record = PostingRecord {
                term: term.clone(),
                postings: list.iter().map(|p| (p.pid.clone(), p.tf)).collect(),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let bad = |line: usize, reason: String| CorpusError::IndexFormat { line, reason };
        let mut lines = reader.lines().enumerate();
        let header_line = match lines.next() {
            Some((_, Ok(l))) => l,
            Some((_, Err(e))) => return Err(bad(1, e.to_string())),
            None => return Err(bad(1, "missing header".into())),
        };
        let header: IndexHeader = serde_json::from_str(&header_line).map_err(|e| bad(1, e.to_string()))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(bad(
                1,
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        if header.doc_count != header.doc_lengths.len() {
            return Err(bad(1, "doc_count disagrees with doc_lengths".into()));
        }
        let mut postings = BTreeMap::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| bad(line_no, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PostingRecord = serde_json::from_str(&line).map_err(|e| bad(line_no, e.to_string()))?;
            let list: Vec<Posting> = record
                .postings
                .into_iter()
                .map(|(pid, tf)| Posting { pid, tf })
                .collect();
            if list.windows(2).any(|w| w[0].pid >= w[1].pid) {
                return Err(bad(line_no, format!("postings for '{}' not sorted", record.term)));
            }
            if let Some(p) = list
                .iter()
                .find(|p| p.tf == 0 || !header.doc_lengths.contains_key(&p.pid))
            {
                return Err(bad(line_no, format!("invalid posting for pid '{}'", p.pid)));
            }
            postings.insert(record.term, list);
        }
        Ok(Self {
            postings,
            doc_lengths: header.doc_lengths,
            avg_doc_len: header.avg_doc_len,
            built_from: header.built_from,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_to(BufWriter::new(file)).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(BufReader::new(file))
    }
}
