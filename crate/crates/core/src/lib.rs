//! Recall-controlled evaluation harness for open-domain multi-hop QA.
//!
//! The crate builds paragraph contexts whose gold-evidence recall is dialed
//! to a target value, runs pluggable QA predictors over several ablated
//! input variants, and aggregates accuracy over a grid of data and model
//! seeds.
//!
//! Pipeline, bottom-up:
//!
//! - [`corpus`]: paragraph ingestion, tokenization, inverted index.
//! - [`retrieval`]: BM25 over decomposed sub-questions, reranking, recall@k,
//!   reranker training-pair export.
//! - [`poisoning`]: recall-controlled context construction and subset labels.
//! - [`ablation`]: the `q`, `q+c`, `q+gd`, `q+ds` input variants.
//! - [`predictor`]: wire-protocol gateway plus built-in baseline predictors.
//! - [`metrics`]: accuracy, token F1, SARI, seed-grid aggregation.
//! - [`experiment`]: configuration, dataset splits, the sweep runner and
//!   report emission.

pub mod ablation;
pub mod corpus;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod poisoning;
pub mod predictor;
pub mod retrieval;
pub mod seed;
pub mod synthetic;
pub mod transport;

pub use ablation::{make_input, AblationError, AblationInput, AblationMode};
pub use corpus::{tokenize, Corpus, CorpusError, InvertedIndex, Paragraph};
pub use dataset::{Answer, DatasetError, DatasetTag, EvidenceSet, QuestionRecord};
pub use metrics::{accuracy, sari, token_f1, MetricsError};
pub use poisoning::{PoisonError, PoisonedContext, Poisoner, SubsetLabel};
pub use predictor::{GatewayError, Prediction, Predictor};
pub use retrieval::{Bm25, Bm25Params, Decomposition, RankedList, RetrievalError};
