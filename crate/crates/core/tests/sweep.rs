mod support;

use std::path::Path;

use recallqa::dataset::load_questions;
use recallqa::experiment::{emit_report, run_experiment, ExperimentError, Manifest, PredictorConfig, SplitSpec};
use recallqa::synthetic::{generate, FixtureSpec};
use recallqa::Corpus;
use support::{small_config, snapshot};

fn tiny_spec() -> FixtureSpec {
    FixtureSpec {
        questions: 40,
        filler_paragraphs: 60,
        ..FixtureSpec::strategyqa()
    }
}

const SPLIT: SplitSpec = SplitSpec {
    train: 20,
    dev: 5,
    test: 15,
    seed: 3,
};

fn overlap() -> PredictorConfig {
    PredictorConfig::Overlap { threshold: 0.04 }
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), &tiny_spec(), SPLIT, overlap());
    cfg.m_grid = vec![0.5, 1.0];
    cfg.data_seeds = vec![0, 1];
    cfg.model_seeds = vec![0, 1];
    let first = run_experiment(&cfg).unwrap();
    assert!(first.is_clean());
    assert_eq!(first.manifest.runs.len(), 8);
    let a = snapshot(&cfg.output_dir);

    run_experiment(&cfg).unwrap();
    assert_eq!(snapshot(&cfg.output_dir), a);

    let elsewhere = tmp.path().join("other");
    cfg.output_dir = elsewhere.clone();
    run_experiment(&cfg).unwrap();
    let mut b = snapshot(&elsewhere);
    let mut a = a;
    a.remove(Path::new("manifest.json"));
    b.remove(Path::new("manifest.json"));
    assert_eq!(a, b);
}

#[test]
fn report_leaves_inputs_alone_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), &tiny_spec(), SPLIT, overlap());
    cfg.m_grid = vec![1.0];
    cfg.data_seeds = vec![0];
    cfg.model_seeds = vec![0];
    run_experiment(&cfg).unwrap();
    let before = snapshot(&cfg.output_dir);
    emit_report(&cfg.output_dir).unwrap();
    assert_eq!(snapshot(&cfg.output_dir), before);
    for name in [
        "report.csv",
        "plots/accuracy_vs_m.csv",
        "plots/subsets.csv",
        "plots/ablation.csv",
    ] {
        assert!(before.contains_key(Path::new(name)), "{name}");
    }
}

#[test]
fn tampered_artifact_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), &tiny_spec(), SPLIT, overlap());
    cfg.m_grid = vec![1.0];
    cfg.data_seeds = vec![0];
    cfg.model_seeds = vec![0];
    run_experiment(&cfg).unwrap();
    let manifest = Manifest::load(&cfg.output_dir).unwrap();
    let target = cfg.output_dir.join(&manifest.runs[0].contexts);
    let mut bytes = std::fs::read(&target).unwrap();
    bytes.extend_from_slice(b"\n");
    std::fs::write(&target, bytes).unwrap();
    assert!(matches!(
        emit_report(&cfg.output_dir),
        Err(ExperimentError::Checksum { .. })
    ));
}

#[test]
fn mixed_annotations_write_one_context_per_annotator() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), &tiny_spec(), SPLIT, overlap());
    cfg.m_grid = vec![0.6];
    cfg.data_seeds = vec![0];
    cfg.model_seeds = vec![0];
    cfg.mixed_annotations = true;
    let out = run_experiment(&cfg).unwrap();
    assert!(out.is_clean());
    let text = std::fs::read_to_string(cfg.output_dir.join("train_contexts/SQ_m0.60_d0_mixed.jsonl")).unwrap();
    assert_eq!(text.lines().count(), SPLIT.train * 3);
}

#[test]
fn dataset_tag_mismatch_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), &tiny_spec(), SPLIT, overlap());
    cfg.dataset_tag = recallqa::DatasetTag::HotpotBool;
    assert!(matches!(run_experiment(&cfg), Err(ExperimentError::Config(_))));
}

#[test]
fn shipped_fixtures_match_generator() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    for (dir, spec) in [
        ("sq", FixtureSpec::strategyqa()),
        ("hpq_bool", FixtureSpec::hotpot_bool()),
        ("hpq_ext", FixtureSpec::hotpot_extractive()),
    ] {
        let fx = generate(&spec);
        let corpus = Corpus::load(&root.join(dir).join("corpus.jsonl")).unwrap();
        let questions = load_questions(&root.join(dir).join("questions.jsonl")).unwrap();
        assert_eq!(corpus, fx.corpus, "{dir}");
        assert_eq!(questions, fx.questions, "{dir}");
    }
}
