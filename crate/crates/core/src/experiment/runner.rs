use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{emit_report, ReportOutcome};
use super::{
    read_file, split_dataset, write_file, ExperimentConfig, ExperimentError, PredictorConfig, RerankerConfig,
    RetrievalConfig,
};
use crate::ablation::{make_input, write_inputs, AblationMode};
use crate::corpus::{Corpus, InvertedIndex};
use crate::dataset::{load_questions, Answer, DatasetTag, QuestionRecord};
use crate::metrics::MetricsReport;
use crate::poisoning::{write_contexts, ContextParams, DistractorPools, Poisoner};
use crate::predictor::{
    builtin_majority, write_predictions, MajorityPredictor, OverlapPredictor, Predictor, RemotePredictor,
};
use crate::retrieval::{
    rerank, Bm25, Bm25Params, Decomposition, JaccardScorer, RankedList, RemoteScorer, RerankScorer,
};
use crate::seed::sha256_hex;

pub const MANIFEST: &str = "manifest.json";
pub const TEST_ANSWERS: &str = "test_answers.jsonl";
pub const POOLS: &str = "pools.jsonl";

/// Artifacts of one (m, data seed, model seed) run, as paths relative to
/// the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub target_m: f64,
    pub data_seed: u64,
    pub model_seed: u64,
    pub contexts: String,
    pub predictions: BTreeMap<AblationMode, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub dataset_tag: DatasetTag,
    pub predictor_id: String,
    /// Some stage failed for an item or run; see `errors`.
    pub partial: bool,
    pub errors: Vec<String>,
    pub runs: Vec<RunEntry>,
    /// sha256 of every input artifact, keyed by relative path.
    pub artifacts: BTreeMap<String, String>,
    /// sha256 of the files written by report emission.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, ExperimentError> {
        let path = dir.join(MANIFEST);
        serde_json::from_slice(&read_file(&path)?).map_err(|e| ExperimentError::Malformed {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), ExperimentError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        write_file(&dir.join(MANIFEST), &bytes)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub report: MetricsReport,
}

impl RunOutcome {
    /// No stage errors and no failed predictions.
    pub fn is_clean(&self) -> bool {
        !self.manifest.partial && self.report.n_failed == 0
    }
}

#[derive(Serialize, Deserialize)]
struct GoldLine {
    qid: String,
    answer: Answer,
}

fn scorer_for(cfg: &RetrievalConfig) -> Result<Option<Box<dyn RerankScorer>>, ExperimentError> {
    Ok(match &cfg.reranker {
        RerankerConfig::None => None,
        RerankerConfig::Jaccard => Some(Box::new(JaccardScorer)),
        RerankerConfig::Remote { endpoint } => Some(Box::new(RemoteScorer::connect(endpoint)?)),
    })
}

/// Ranked distractor candidates for each record: BM25 over its
/// decomposition within the retrieval budget, optionally reranked against
/// the full question.
pub fn build_pools(
    records: &[QuestionRecord],
    corpus: &Corpus,
    index: &InvertedIndex,
    cfg: &RetrievalConfig,
) -> Result<DistractorPools, ExperimentError> {
    let bm25 = Bm25::new(index, Bm25Params { k1: cfg.k1, b: cfg.b });
    let scorer = scorer_for(cfg)?;
    records
        .par_iter()
        .map(|r| {
            let decomp = Decomposition::for_question(r)?;
            let mut list = bm25.retrieve_for_decomposition(&decomp, cfg.budget)?;
            if let Some(s) = &scorer {
                list = rerank(&r.question, &list, corpus, s.as_ref())?;
            }
            Ok((r.qid.clone(), list))
        })
        .collect()
}

pub fn write_pools<W: Write>(pools: &DistractorPools, mut writer: W) -> std::io::Result<()> {
    for list in pools.values() {
        serde_json::to_writer(&mut writer, list)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_pools<R: BufRead>(reader: R) -> Result<DistractorPools, ExperimentError> {
    let mut pools = DistractorPools::new();
    for (idx, line) in reader.lines().enumerate() {
        let malformed = |reason: String| ExperimentError::Malformed {
            path: format!("pools line {}", idx + 1),
            reason,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let list: RankedList = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        pools.insert(list.query_tag.clone(), list);
    }
    Ok(pools)
}

/// Instantiates the configured predictor; the majority baseline learns its
/// label from `train`.
pub fn make_predictor(
    cfg: &PredictorConfig,
    tag: DatasetTag,
    train: &[QuestionRecord],
) -> Result<Box<dyn Predictor>, ExperimentError> {
    Ok(match cfg {
        PredictorConfig::Majority if tag.is_boolean() => {
            let labels: Vec<bool> = train.iter().filter_map(|r| r.answer.as_bool()).collect();
            Box::new(builtin_majority(&labels)?)
        }
        PredictorConfig::Majority => {
            let answers: Vec<Answer> = train.iter().map(|r| r.answer.clone()).collect();
            Box::new(MajorityPredictor::from_answers(&answers)?)
        }
        PredictorConfig::Overlap { threshold } => Box::new(OverlapPredictor::new(*threshold)),
        PredictorConfig::Remote { endpoint, id } => Box::new(RemotePredictor::connect(endpoint.clone(), id.clone())?),
    })
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    corpus: &'a Corpus,
    test: &'a [QuestionRecord],
    train: &'a [QuestionRecord],
    pools: &'a DistractorPools,
    predictor: &'a dyn Predictor,
}

#[derive(Default)]
struct CellOutput {
    runs: Vec<RunEntry>,
    artifacts: Vec<(String, String)>,
    errors: Vec<String>,
}

impl CellOutput {
    fn write(&mut self, dir: &Path, rel: String, bytes: &[u8]) -> Result<(), ExperimentError> {
        write_file(&dir.join(&rel), bytes)?;
        self.artifacts.push((rel, sha256_hex(bytes)));
        Ok(())
    }
}

fn run_cell(s: &Shared<'_>, m: f64, data_seed: u64) -> Result<CellOutput, ExperimentError> {
    let mut out = CellOutput::default();
    let tag = s.cfg.dataset_tag.as_str();
    let stem = format!("{tag}_m{m:.2}_d{data_seed}");
    let poisoner = Poisoner::new(ContextParams {
        target_m: m,
        k: s.cfg.context_size(),
        data_seed,
    })?;

    let mut contexts = Vec::new();
    let mut records = Vec::new();
    for (record, result) in s.test.iter().zip(poisoner.poison_all(s.test, s.pools)) {
        match result {
            Ok(c) => {
                contexts.push(c);
                records.push(record);
            }
            Err(e) => out.errors.push(format!("{stem}: {e}")),
        }
    }
    let mut buf = Vec::new();
    write_contexts(&contexts, &mut buf).map_err(|e| ExperimentError::io(Path::new(&stem), e))?;
    let contexts_rel = format!("contexts/{stem}.jsonl");
    out.write(s.dir, contexts_rel.clone(), &buf)?;

    if s.cfg.mixed_annotations {
        let mixed = poisoner.build_mixed_annotation_examples(s.train, s.pools)?;
        let mut buf = Vec::new();
        write_contexts(&mixed, &mut buf).map_err(|e| ExperimentError::io(Path::new(&stem), e))?;
        out.write(s.dir, format!("train_contexts/{stem}_mixed.jsonl"), &buf)?;
    }

    let mut per_mode = Vec::new();
    for &mode in &s.cfg.modes {
        let mut inputs = Vec::new();
        for (record, context) in records.iter().zip(&contexts) {
            match make_input(record, context, s.corpus, mode) {
                Ok(i) => inputs.push(i),
                Err(e) => out.errors.push(format!("{stem} {mode}: {e}")),
            }
        }
        let mut buf = Vec::new();
        write_inputs(&inputs, &mut buf).map_err(|e| ExperimentError::io(Path::new(&stem), e))?;
        out.write(s.dir, format!("ablation/{stem}_{}.jsonl", mode.slug()), &buf)?;
        per_mode.push((mode, inputs));
    }

    for &model_seed in &s.cfg.model_seeds {
        let mut entry = RunEntry {
            target_m: m,
            data_seed,
            model_seed,
            contexts: contexts_rel.clone(),
            predictions: BTreeMap::new(),
        };
        for (mode, inputs) in &per_mode {
            match s.predictor.predict_batch(inputs, model_seed) {
                Ok(preds) => {
                    let mut buf = Vec::new();
                    write_predictions(&preds, &mut buf).map_err(|e| ExperimentError::io(Path::new(&stem), e))?;
                    let rel = format!("predictions/{stem}_s{model_seed}_{}.jsonl", mode.slug());
                    out.write(s.dir, rel.clone(), &buf)?;
                    entry.predictions.insert(*mode, rel);
                }
                Err(e) => out.errors.push(format!("{stem} s{model_seed} {mode}: {e}")),
            }
        }
        out.runs.push(entry);
    }
    Ok(out)
}

/// Runs the full (m, data seed, model seed, mode) grid into
/// `cfg.output_dir` and emits the report.
///
/// Item- and run-level failures are recorded in the manifest instead of
/// aborting; configuration, input and I/O errors abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    let corpus = Corpus::load(&cfg.corpus)?;
    let questions = load_questions(&cfg.questions)?;
    for q in &questions {
        if q.dataset_tag != cfg.dataset_tag {
            return Err(ExperimentError::Config(format!(
                "question '{}' is tagged {} but the config says {}",
                q.qid, q.dataset_tag, cfg.dataset_tag
            )));
        }
        q.check_resolvable(&corpus)?;
    }

    let split = split_dataset(&questions, cfg.split)?;
    split.write_manifests(&dir.join("split"))?;
    let mut artifacts = BTreeMap::new();
    for (name, _) in split.parts() {
        let rel = format!("split/{name}.txt");
        artifacts.insert(rel.clone(), sha256_hex(&read_file(&dir.join(&rel))?));
    }

    let mut gold = Vec::new();
    for r in &split.test {
        serde_json::to_writer(
            &mut gold,
            &GoldLine {
                qid: r.qid.clone(),
                answer: r.answer.clone(),
            },
        )
        .expect("answers serialize");
        gold.push(b'\n');
    }
    write_file(&dir.join(TEST_ANSWERS), &gold)?;
    artifacts.insert(TEST_ANSWERS.to_string(), sha256_hex(&gold));

    let index = InvertedIndex::build(&corpus)?;
    let mut pooled: Vec<QuestionRecord> = split.test.clone();
    if cfg.mixed_annotations {
        pooled.extend(split.train.iter().cloned());
    }
    let pools = build_pools(&pooled, &corpus, &index, &cfg.retrieval)?;
    let mut buf = Vec::new();
    write_pools(&pools, &mut buf).map_err(|e| ExperimentError::io(&dir.join(POOLS), e))?;
    write_file(&dir.join(POOLS), &buf)?;
    artifacts.insert(POOLS.to_string(), sha256_hex(&buf));

    let predictor = make_predictor(&cfg.predictor, cfg.dataset_tag, &split.train)?;
    let shared = Shared {
        cfg,
        dir,
        corpus: &corpus,
        test: &split.test,
        train: &split.train,
        pools: &pools,
        predictor: predictor.as_ref(),
    };
    let cells: Vec<(f64, u64)> = cfg
        .m_grid
        .iter()
        .flat_map(|&m| cfg.data_seeds.iter().map(move |&d| (m, d)))
        .collect();
    let outputs = cells
        .par_iter()
        .map(|&(m, d)| run_cell(&shared, m, d))
        .collect::<Result<Vec<_>, _>>()?;

    let mut manifest = Manifest {
        config_sha256: sha256_hex(&serde_json::to_vec(cfg).expect("config serializes")),
        dataset_tag: cfg.dataset_tag,
        predictor_id: predictor.id().to_string(),
        partial: false,
        errors: Vec::new(),
        runs: Vec::new(),
        artifacts,
        outputs: BTreeMap::new(),
    };
    for cell in outputs {
        manifest.runs.extend(cell.runs);
        manifest.artifacts.extend(cell.artifacts);
        manifest.errors.extend(cell.errors);
    }
    manifest.partial = !manifest.errors.is_empty();
    manifest.save(dir)?;

    let ReportOutcome { report, manifest } = emit_report(dir)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        manifest,
        report,
    })
}

pub(crate) fn parse_gold(bytes: &[u8]) -> Result<BTreeMap<String, Answer>, ExperimentError> {
    let mut gold = BTreeMap::new();
    for line in bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
        let g: GoldLine = serde_json::from_slice(line).map_err(|e| ExperimentError::Malformed {
            path: TEST_ANSWERS.to_string(),
            reason: e.to_string(),
        })?;
        gold.insert(g.qid, g.answer);
    }
    Ok(gold)
}
