use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::ablation::AblationMode;
use crate::dataset::DatasetTag;
use crate::transport::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictorConfig {
    /// Most frequent training answer.
    Majority,
    /// Yes when question/context token overlap reaches `threshold`.
    Overlap { threshold: f64 },
    Remote {
        endpoint: Endpoint,
        #[serde(default = "default_remote_id")]
        id: String,
    },
}

fn default_remote_id() -> String {
    "remote".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RerankerConfig {
    None,
    Jaccard,
    Remote { endpoint: Endpoint },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_reranker")]
    pub reranker: RerankerConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            k1: default_k1(),
            b: default_b(),
            reranker: default_reranker(),
        }
    }
}

fn default_budget() -> usize {
    400
}
fn default_k1() -> f64 {
    1.2
}
fn default_b() -> f64 {
    0.75
}
fn default_reranker() -> RerankerConfig {
    RerankerConfig::None
}
fn default_m_grid() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8, 1.0]
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_modes() -> Vec<AblationMode> {
    AblationMode::ALL.to_vec()
}

/// A full sweep. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub questions: PathBuf,
    pub dataset_tag: DatasetTag,
    /// Context size; defaults to 4 for SQ and 6 for the HotpotQA variants.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub data_seeds: Vec<u64>,
    #[serde(default = "default_seeds")]
    pub model_seeds: Vec<u64>,
    pub predictor: PredictorConfig,
    #[serde(default = "default_modes")]
    pub modes: Vec<AblationMode>,
    pub output_dir: PathBuf,
    pub split: SplitSpec,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    /// Also write one context per (train question, annotator).
    #[serde(default)]
    pub mixed_annotations: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.corpus, &mut self.questions, &mut self.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn context_size(&self) -> usize {
        self.k.unwrap_or_else(|| self.dataset_tag.default_k())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.m_grid.is_empty() {
            return bad("m_grid is empty");
        }
        if let Some(m) = self.m_grid.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(ExperimentError::Config(format!("m_grid value {m} outside [0, 1]")));
        }
        if self.data_seeds.is_empty() || self.model_seeds.is_empty() {
            return bad("seed lists must be non-empty");
        }
        if self.context_size() == 0 {
            return bad("k must be at least 1");
        }
        if self.modes.is_empty() {
            return bad("no ablation modes configured");
        }
        if self.retrieval.budget == 0 {
            return bad("retrieval budget must be positive");
        }
        match &self.predictor {
            PredictorConfig::Remote { endpoint, .. } => endpoint.validate().map_err(ExperimentError::Config)?,
            PredictorConfig::Overlap { threshold } if threshold.is_nan() => return bad("overlap threshold is NaN"),
            PredictorConfig::Overlap { .. } if !self.dataset_tag.is_boolean() => {
                return bad("the overlap baseline answers Boolean datasets only")
            }
            _ => {}
        }
        if let RerankerConfig::Remote { endpoint } = &self.retrieval.reranker {
            endpoint.validate().map_err(ExperimentError::Config)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "corpus": "corpus.jsonl",
        "questions": "questions.jsonl",
        "dataset_tag": "SQ",
        "predictor": {"kind": "majority"},
        "output_dir": "out",
        "split": {"train": 10, "dev": 0, "test": 5}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.m_grid, vec![0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(cfg.data_seeds.len(), 3);
        assert_eq!(cfg.modes.len(), 4);
        assert_eq!(cfg.context_size(), 4);
        assert_eq!(cfg.retrieval.budget, 400);
        cfg.validate().unwrap();
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/exp"));
        assert_eq!(cfg.corpus, PathBuf::from("/data/exp/corpus.jsonl"));
        assert_eq!(cfg.output_dir, PathBuf::from("/data/exp/out"));
    }

    #[test]
    fn rejects_bad_grid() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.m_grid = vec![0.5, 1.5];
        assert!(cfg.validate().is_err());
        cfg.m_grid = vec![0.5];
        cfg.model_seeds.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn predictor_variants_parse() {
        let p: PredictorConfig = serde_json::from_str(r#"{"kind":"overlap","threshold":0.2}"#).unwrap();
        assert_eq!(p, PredictorConfig::Overlap { threshold: 0.2 });
        let p: PredictorConfig =
            serde_json::from_str(r#"{"kind":"remote","endpoint":{"transport":"http","address":"http://127.0.0.1:9"}}"#)
                .unwrap();
        assert!(matches!(p, PredictorConfig::Remote { ref id, .. } if id == "remote"));
    }
}
