//! Fixture and run-directory helpers for the end-to-end tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use recallqa::corpus::Corpus;
use recallqa::dataset::{write_questions, QuestionRecord};
use recallqa::experiment::{ExperimentConfig, PredictorConfig, SplitSpec};
use recallqa::synthetic::{generate, FixtureSpec};

/// Writes `corpus.jsonl` and `questions.jsonl` under `dir`.
pub fn write_fixture(dir: &Path, corpus: &Corpus, questions: &[QuestionRecord]) {
    std::fs::create_dir_all(dir).unwrap();
    corpus
        .write_jsonl(BufWriter::new(File::create(dir.join("corpus.jsonl")).unwrap()))
        .unwrap();
    write_questions(
        questions,
        BufWriter::new(File::create(dir.join("questions.jsonl")).unwrap()),
    )
    .unwrap();
}

/// A generated fixture on disk plus a config pointing at it.
pub fn small_config(dir: &Path, spec: &FixtureSpec, split: SplitSpec, predictor: PredictorConfig) -> ExperimentConfig {
    let fx = generate(spec);
    write_fixture(dir, &fx.corpus, &fx.questions);
    let json = serde_json::json!({
        "corpus": dir.join("corpus.jsonl"),
        "questions": dir.join("questions.jsonl"),
        "dataset_tag": spec.dataset_tag,
        "predictor": predictor,
        "output_dir": dir.join("run"),
        "split": split,
    });
    ExperimentConfig::from_json(&json.to_string()).unwrap()
}

/// Every file under `root`, keyed by path relative to it.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}
