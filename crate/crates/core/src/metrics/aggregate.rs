use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{accuracy, mean_token_f1, MetricsError};
use crate::ablation::AblationMode;
use crate::dataset::{Answer, DatasetTag};
use crate::poisoning::{ContextRecord, SubsetLabel};
use crate::predictor::Prediction;

/// Predictions and contexts of one (dataset, m, data seed, model seed) run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub dataset_tag: DatasetTag,
    pub target_m: f64,
    pub data_seed: u64,
    pub model_seed: u64,
    pub predictions: Vec<Prediction>,
    pub contexts: BTreeMap<String, ContextRecord>,
}

impl RunResult {
    fn check(&self) -> Result<(), MetricsError> {
        let mut seen = BTreeSet::new();
        for p in &self.predictions {
            if !self.contexts.contains_key(&p.qid) {
                return Err(MetricsError::Inconsistent(format!(
                    "prediction for '{}' has no context record",
                    p.qid
                )));
            }
            if p.target_m != self.target_m || p.data_seed != self.data_seed || p.model_seed != self.model_seed {
                return Err(MetricsError::Inconsistent(format!(
                    "prediction for '{}' ({}) is labeled with a different run",
                    p.qid, p.mode
                )));
            }
            if !seen.insert((p.qid.as_str(), p.mode)) {
                return Err(MetricsError::Inconsistent(format!(
                    "duplicate prediction for '{}' ({})",
                    p.qid, p.mode
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetCell {
    All,
    Easy,
    Med,
    Hard,
}

impl SubsetCell {
    pub fn as_str(self) -> &'static str {
        match self {
            SubsetCell::All => "all",
            SubsetCell::Easy => "easy",
            SubsetCell::Med => "med",
            SubsetCell::Hard => "hard",
        }
    }

    fn contains(self, label: SubsetLabel) -> bool {
        match self {
            SubsetCell::All => true,
            SubsetCell::Easy => label == SubsetLabel::Easy,
            SubsetCell::Med => label == SubsetLabel::Med,
            SubsetCell::Hard => label == SubsetLabel::Hard,
        }
    }
}

impl fmt::Display for SubsetCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grouping {
    /// Emit easy/med/hard rows in addition to `all`.
    pub per_subset: bool,
}

impl Default for Grouping {
    fn default() -> Self {
        Self { per_subset: true }
    }
}

/// One cell of the report.
///
/// `mean` and `std` are over runs with at least one evaluable example and
/// are `None` when no run qualifies. `std` is the population deviation.
/// `n_examples` is the mean number of examples per run; `n_failed` is the
/// total across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset_tag: DatasetTag,
    pub target_m: f64,
    pub subset: SubsetCell,
    pub mode: AblationMode,
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_runs: usize,
    pub n_examples: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
    pub n_predictions: usize,
    pub n_failed: usize,
}

impl MetricsReport {
    pub fn failed_fraction(&self) -> f64 {
        if self.n_predictions == 0 {
            0.0
        } else {
            self.n_failed as f64 / self.n_predictions as f64
        }
    }

    pub fn find(
        &self,
        dataset: DatasetTag,
        target_m: f64,
        subset: SubsetCell,
        mode: AblationMode,
        metric: &str,
    ) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.dataset_tag == dataset
                && r.target_m == target_m
                && r.subset == subset
                && r.mode == mode
                && r.metric == metric
        })
    }
}

/// Population mean and standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    // shifted by the first value so identical runs give an exact mean
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

pub const REALIZED_RECALL: &str = "realized_recall";

fn metric_name(tag: DatasetTag) -> &'static str {
    if tag.is_boolean() {
        "accuracy"
    } else {
        "f1"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MKey(f64);

impl Eq for MKey {}

impl PartialOrd for MKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

type CellKey = (DatasetTag, MKey, SubsetCell, AblationMode, &'static str);

#[derive(Default)]
struct Cell {
    values: Vec<f64>,
    examples: Vec<usize>,
    failed: usize,
}

/// Aggregates per-run metrics over the seed grid.
///
/// Boolean datasets report `accuracy`, extractive ones mean token `f1`.
/// Each run also contributes the mean realized recall of its contexts under
/// the `q+c` mode.
pub fn aggregate(
    results: &[RunResult],
    gold: &BTreeMap<String, Answer>,
    grouping: Grouping,
) -> Result<MetricsReport, MetricsError> {
    let subsets: &[SubsetCell] = if grouping.per_subset {
        &[SubsetCell::All, SubsetCell::Easy, SubsetCell::Med, SubsetCell::Hard]
    } else {
        &[SubsetCell::All]
    };
    let mut run_keys = BTreeSet::new();
    let mut cells: BTreeMap<CellKey, Cell> = BTreeMap::new();
    let mut report = MetricsReport::default();

    for run in results {
        run.check()?;
        if !run_keys.insert((run.dataset_tag, MKey(run.target_m), run.data_seed, run.model_seed)) {
            return Err(MetricsError::Inconsistent(format!(
                "run {} m={} data_seed={} model_seed={} appears twice",
                run.dataset_tag, run.target_m, run.data_seed, run.model_seed
            )));
        }
        let m = MKey(run.target_m);
        let metric = metric_name(run.dataset_tag);
        let modes: BTreeSet<AblationMode> = run.predictions.iter().map(|p| p.mode).collect();
        report.n_predictions += run.predictions.len();
        report.n_failed += run.predictions.iter().filter(|p| p.failed).count();

        for &subset in subsets {
            for &mode in &modes {
                let selected: Vec<Prediction> = run
                    .predictions
                    .iter()
                    .filter(|p| p.mode == mode && subset.contains(run.contexts[&p.qid].subset))
                    .cloned()
                    .collect();
                let cell = cells.entry((run.dataset_tag, m, subset, mode, metric)).or_default();
                cell.examples.push(selected.len());
                cell.failed += selected.iter().filter(|p| p.failed).count();
                if selected.is_empty() {
                    continue;
                }
                let scored = if run.dataset_tag.is_boolean() {
                    accuracy(&selected, gold)
                } else {
                    mean_token_f1(&selected, gold)
                };
                match scored {
                    Ok(s) => cell.values.push(s.value),
                    Err(MetricsError::NoEvaluable(_)) => {}
                    Err(e) => return Err(e),
                }
            }

            let recalls: Vec<f64> = run
                .contexts
                .values()
                .filter(|c| subset.contains(c.subset))
                .map(|c| c.realized_recall)
                .collect();
            let cell = cells
                .entry((run.dataset_tag, m, subset, AblationMode::Context, REALIZED_RECALL))
                .or_default();
            cell.examples.push(recalls.len());
            if let Some((mean, _)) = mean_std(&recalls) {
                cell.values.push(mean);
            }
        }
    }

    for ((dataset_tag, m, subset, mode, metric), cell) in cells {
        let stats = mean_std(&cell.values);
        report.rows.push(ReportRow {
            dataset_tag,
            target_m: m.0,
            subset,
            mode,
            metric: metric.to_string(),
            mean: stats.map(|s| s.0),
            std: stats.map(|s| s.1),
            n_runs: cell.values.len(),
            n_examples: cell.examples.iter().sum::<usize>() as f64 / cell.examples.len() as f64,
            n_failed: cell.failed,
        });
    }
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.csv`. Empty `mean`/`std` fields mean no run had examples.
pub fn write_report_csv<W: Write>(report: &MetricsReport, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dataset_tag",
        "target_m",
        "subset",
        "mode",
        "metric",
        "mean",
        "std",
        "n_runs",
        "n_examples",
        "n_failed",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.dataset_tag.as_str().to_string(),
            r.target_m.to_string(),
            r.subset.as_str().to_string(),
            r.mode.as_str().to_string(),
            r.metric.clone(),
            fmt_opt(r.mean),
            fmt_opt(r.std),
            r.n_runs.to_string(),
            r.n_examples.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
