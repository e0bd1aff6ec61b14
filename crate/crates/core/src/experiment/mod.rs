//! Sweep configuration, dataset splits, the seed-grid runner and report
//! emission.
//!
//! A run directory looks like:
//!
//! ```text
//! manifest.json            config hash, artifact checksums, errors
//! split/{train,dev,test}.txt
//! test_answers.jsonl
//! pools.jsonl              ranked distractor candidates per question
//! contexts/{tag}_m{m}_d{ds}.jsonl
//! ablation/{tag}_m{m}_d{ds}_{mode}.jsonl
//! predictions/{tag}_m{m}_d{ds}_s{ms}_{mode}.jsonl
//! train_contexts/{tag}_m{m}_d{ds}_mixed.jsonl   (mixed_annotations only)
//! report.csv
//! plots/accuracy_vs_m.csv, subsets.csv, ablation.csv
//! ```

mod config;
mod report;
mod runner;
mod split;

use std::path::Path;

pub use config::{ExperimentConfig, PredictorConfig, RerankerConfig, RetrievalConfig, SplitSpec};
pub use report::{emit_report, ReportOutcome, PLOT_ABLATION, PLOT_ACCURACY, PLOT_SUBSETS, REPORT};
pub use runner::{
    build_pools, make_predictor, read_pools, run_experiment, write_pools, Manifest, RunEntry, RunOutcome,
};
pub use split::{split_dataset, DatasetSplit};

use crate::ablation::AblationError;
use crate::corpus::CorpusError;
use crate::dataset::DatasetError;
use crate::metrics::MetricsError;
use crate::poisoning::PoisonError;
use crate::predictor::GatewayError;
use crate::retrieval::RetrievalError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("split needs {requested} records but only {available} exist")]
    InfeasibleSplit { requested: usize, available: usize },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checksum mismatch for {path}: manifest says {expected}, file has {actual}")]
    Checksum {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("malformed {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("no runs with predictions in {0}")]
    EmptyResults(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Poison(#[from] PoisonError),
    #[error(transparent)]
    Ablation(#[from] AblationError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| ExperimentError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, ExperimentError> {
    std::fs::read(path).map_err(|e| ExperimentError::io(path, e))
}
