use std::collections::BTreeMap;
use std::path::Path;

use super::runner::{parse_gold, Manifest, TEST_ANSWERS};
use super::{read_file, write_file, ExperimentError};
use crate::ablation::AblationMode;
use crate::metrics::{
    aggregate, write_report_csv, Grouping, MetricsReport, ReportRow, RunResult, SubsetCell, REALIZED_RECALL,
};
use crate::poisoning::read_context_records;
use crate::predictor::read_predictions;
use crate::seed::sha256_hex;

pub const REPORT: &str = "report.csv";
pub const PLOT_ACCURACY: &str = "plots/accuracy_vs_m.csv";
pub const PLOT_SUBSETS: &str = "plots/subsets.csv";
pub const PLOT_ABLATION: &str = "plots/ablation.csv";

/// Failed-prediction share at which the report is flagged.
pub const FLAG_FRACTION: f64 = 0.01;

#[derive(Debug)]
pub struct ReportOutcome {
    pub report: MetricsReport,
    pub manifest: Manifest,
}

fn verified(dir: &Path, manifest: &Manifest, rel: &str) -> Result<Vec<u8>, ExperimentError> {
    let bytes = read_file(&dir.join(rel))?;
    let actual = sha256_hex(&bytes);
    match manifest.artifacts.get(rel) {
        Some(expected) if *expected == actual => Ok(bytes),
        Some(expected) => Err(ExperimentError::Checksum {
            path: rel.to_string(),
            expected: expected.clone(),
            actual,
        }),
        None => Err(ExperimentError::Malformed {
            path: rel.to_string(),
            reason: "not listed in the manifest".into(),
        }),
    }
}

fn load_runs(dir: &Path, manifest: &Manifest) -> Result<Vec<RunResult>, ExperimentError> {
    let mut results = Vec::new();
    for entry in &manifest.runs {
        if entry.predictions.is_empty() {
            continue;
        }
        let contexts = read_context_records(&verified(dir, manifest, &entry.contexts)?[..])?
            .into_iter()
            .map(|c| (c.qid.clone(), c))
            .collect();
        let mut predictions = Vec::new();
        for rel in entry.predictions.values() {
            predictions.extend(read_predictions(&verified(dir, manifest, rel)?[..])?);
        }
        results.push(RunResult {
            dataset_tag: manifest.dataset_tag,
            target_m: entry.target_m,
            data_seed: entry.data_seed,
            model_seed: entry.model_seed,
            predictions,
            contexts,
        });
    }
    Ok(results)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn is_score(r: &ReportRow) -> bool {
    r.metric != REALIZED_RECALL
}

fn accuracy_plot(report: &MetricsReport) -> Vec<u8> {
    let mut rows: Vec<&ReportRow> = report
        .rows
        .iter()
        .filter(|r| r.subset == SubsetCell::All && is_score(r))
        .collect();
    rows.sort_by(|a, b| {
        (a.mode, a.target_m)
            .partial_cmp(&(b.mode, b.target_m))
            .expect("finite m")
    });
    csv_bytes(
        &["dataset_tag", "mode", "metric", "target_m", "mean", "std", "n_runs"],
        rows.into_iter()
            .map(|r| {
                vec![
                    r.dataset_tag.to_string(),
                    r.mode.to_string(),
                    r.metric.clone(),
                    r.target_m.to_string(),
                    opt(r.mean),
                    opt(r.std),
                    r.n_runs.to_string(),
                ]
            })
            .collect(),
    )
}

fn subset_plot(report: &MetricsReport) -> Vec<u8> {
    csv_bytes(
        &[
            "dataset_tag",
            "target_m",
            "subset",
            "mode",
            "metric",
            "mean",
            "std",
            "n_examples",
        ],
        report
            .rows
            .iter()
            .filter(|r| is_score(r))
            .map(|r| {
                vec![
                    r.dataset_tag.to_string(),
                    r.target_m.to_string(),
                    r.subset.to_string(),
                    r.mode.to_string(),
                    r.metric.clone(),
                    opt(r.mean),
                    opt(r.std),
                    r.n_examples.to_string(),
                ]
            })
            .collect(),
    )
}

/// One row per (m, subset) with a mean and a std column for each mode.
fn ablation_plot(report: &MetricsReport) -> Vec<u8> {
    let mut header = vec![
        "dataset_tag".to_string(),
        "target_m".into(),
        "subset".into(),
        "metric".into(),
    ];
    header.extend(AblationMode::ALL.iter().map(|m| m.to_string()));
    header.extend(AblationMode::ALL.iter().map(|m| format!("{m}_std")));
    let mut grouped: BTreeMap<(String, u64, SubsetCell, String), BTreeMap<AblationMode, &ReportRow>> = BTreeMap::new();
    for r in report.rows.iter().filter(|r| is_score(r)) {
        grouped
            .entry((
                r.dataset_tag.to_string(),
                r.target_m.to_bits(),
                r.subset,
                r.metric.clone(),
            ))
            .or_default()
            .insert(r.mode, r);
    }
    let mut keys: Vec<_> = grouped.keys().cloned().collect();
    keys.sort_by(|a, b| {
        (&a.0, f64::from_bits(a.1), a.2)
            .partial_cmp(&(&b.0, f64::from_bits(b.1), b.2))
            .expect("finite m")
    });
    let rows = keys
        .into_iter()
        .map(|key| {
            let by_mode = &grouped[&key];
            let mut row = vec![
                key.0.clone(),
                f64::from_bits(key.1).to_string(),
                key.2.to_string(),
                key.3.clone(),
            ];
            row.extend(
                AblationMode::ALL
                    .iter()
                    .map(|m| opt(by_mode.get(m).and_then(|r| r.mean))),
            );
            row.extend(
                AblationMode::ALL
                    .iter()
                    .map(|m| opt(by_mode.get(m).and_then(|r| r.std))),
            );
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(&header, rows)
}

/// Recomputes `report.csv` and the plot CSVs from a run directory.
///
/// Every input is checked against the manifest checksum first; inputs are
/// never rewritten. The report gains leading `#` comment lines when the
/// run is flagged partial.
pub fn emit_report(dir: &Path) -> Result<ReportOutcome, ExperimentError> {
    let mut manifest = Manifest::load(dir)?;
    let runs = load_runs(dir, &manifest)?;
    if runs.is_empty() {
        return Err(ExperimentError::EmptyResults(dir.display().to_string()));
    }
    let gold = parse_gold(&verified(dir, &manifest, TEST_ANSWERS)?)?;
    let report = aggregate(&runs, &gold, Grouping::default())?;

    let mut body = Vec::new();
    if report.failed_fraction() >= FLAG_FRACTION {
        body.extend(
            format!(
                "# partial: {} of {} predictions failed ({:.2}%)\n",
                report.n_failed,
                report.n_predictions,
                100.0 * report.failed_fraction()
            )
            .bytes(),
        );
    }
    if manifest.partial {
        body.extend(format!("# partial: {} stage errors, see manifest.json\n", manifest.errors.len()).bytes());
    }
    write_report_csv(&report, &mut body).map_err(|e| ExperimentError::Malformed {
        path: REPORT.into(),
        reason: e.to_string(),
    })?;

    manifest.outputs.clear();
    for (rel, bytes) in [
        (REPORT, body),
        (PLOT_ACCURACY, accuracy_plot(&report)),
        (PLOT_SUBSETS, subset_plot(&report)),
        (PLOT_ABLATION, ablation_plot(&report)),
    ] {
        write_file(&dir.join(rel), &bytes)?;
        manifest.outputs.insert(rel.to_string(), sha256_hex(&bytes));
    }
    manifest.save(dir)?;
    Ok(ReportOutcome { report, manifest })
}
