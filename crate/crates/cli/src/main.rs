//! `recallqa` command-line front end.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use recallqa::ablation::{make_input, read_inputs, write_inputs, AblationMode};
use recallqa::corpus::{Corpus, InvertedIndex};
use recallqa::dataset::{load_questions, write_questions, DatasetTag, QuestionRecord};
use recallqa::experiment::{
    build_pools, emit_report, make_predictor, read_pools, run_experiment, split_dataset, ExperimentConfig,
    PredictorConfig, RerankerConfig, RetrievalConfig, SplitSpec,
};
use recallqa::poisoning::{read_context_records, write_contexts, ContextParams, PoisonedContext, Poisoner};
use recallqa::predictor::write_predictions;
use recallqa::retrieval::{export_rerank_pairs, write_pairs, Bm25, Bm25Params, PairRatio};
use recallqa::synthetic::{generate, FixtureSpec};
use recallqa::transport::{Endpoint, TransportKind};

#[derive(Parser)]
#[command(name = "recallqa", version, about = "Recall-controlled QA evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a paragraph file and write it back in canonical pid order.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the inverted index file for a corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded train/dev/test split; writes qid manifests and question files.
    Split {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        train: usize,
        #[arg(long, default_value_t = 0)]
        dev: usize,
        #[arg(long)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build recall-controlled contexts.
    Poison(PoisonArgs),
    /// Render ablation inputs from contexts.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        contexts: PathBuf,
        /// Modes to render (q, q+c, q+gd, q+ds); all when omitted.
        #[arg(long = "mode", value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a predictor over ablation inputs.
    Predict(PredictArgs),
    /// Recompute report.csv and plot data for a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write reranker training pairs.
    ExportRerankPairs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        bm25_negatives: usize,
        #[arg(long, default_value_t = 1)]
        other_gold_negatives: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
    },
    /// Full sweep from a config file.
    Run(RunArgs),
    /// Write a synthetic corpus and question set.
    GenFixture {
        #[arg(long, value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        questions: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Sq,
    HpqBool,
    HpqExt,
    Calibration,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorKind {
    Majority,
    Overlap,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum RerankerKind {
    None,
    Jaccard,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Http,
    Subprocess,
}

#[derive(Args)]
struct PoisonArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Precomputed pools; otherwise BM25 over each decomposition.
    #[arg(long)]
    pools: Option<PathBuf>,
    /// Gold retention probability.
    #[arg(long)]
    m: f64,
    /// Context size; dataset default when omitted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long, default_value_t = 400)]
    budget: usize,
    /// One context per (question, annotator) instead of one per question.
    #[arg(long)]
    mixed: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EndpointArgs {
    #[arg(long, value_enum)]
    transport: Option<Transport>,
    /// URL for http, command line for subprocess.
    #[arg(long)]
    address: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

impl EndpointArgs {
    fn endpoint(&self) -> Result<Option<Endpoint>> {
        let Some(address) = &self.address else {
            return Ok(None);
        };
        let transport = match self.transport.unwrap_or(Transport::Http) {
            Transport::Http => TransportKind::Http,
            Transport::Subprocess => TransportKind::Subprocess,
        };
        let mut e: Endpoint = serde_json::from_value(serde_json::json!({
            "transport": transport,
            "address": address,
        }))?;
        if let Some(v) = self.batch_size {
            e.batch_size = v;
        }
        if let Some(v) = self.timeout_ms {
            e.timeout_ms = v;
        }
        if let Some(v) = self.max_in_flight {
            e.max_in_flight = v;
        }
        Ok(Some(e))
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    inputs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "majority")]
    predictor: PredictorKind,
    /// Questions whose answers train the majority baseline.
    #[arg(long)]
    train_questions: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long, default_value = "remote")]
    id: String,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    questions: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    m_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    data_seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    model_seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    #[arg(long, value_enum)]
    predictor: Option<PredictorKind>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum)]
    reranker: Option<RerankerKind>,
    #[arg(long)]
    mixed_annotations: Option<bool>,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

fn parse_modes(raw: &[String]) -> Result<Vec<AblationMode>> {
    if raw.is_empty() {
        return Ok(AblationMode::ALL.to_vec());
    }
    raw.iter().map(|m| Ok(m.parse::<AblationMode>()?)).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn dataset_tag(records: &[QuestionRecord]) -> Result<DatasetTag> {
    let Some(first) = records.first() else {
        bail!("question file is empty");
    };
    if let Some(r) = records.iter().find(|r| r.dataset_tag != first.dataset_tag) {
        bail!("mixed dataset tags: {} and {}", first.dataset_tag, r.dataset_tag);
    }
    Ok(first.dataset_tag)
}

fn poison(a: PoisonArgs) -> Result<bool> {
    let corpus = Corpus::load(&a.corpus)?;
    let questions = load_questions(&a.questions)?;
    let tag = dataset_tag(&questions)?;
    let pools = match &a.pools {
        Some(p) => read_pools(open(p)?)?,
        None => {
            let index = InvertedIndex::build(&corpus)?;
            let cfg = RetrievalConfig {
                budget: a.budget,
                ..RetrievalConfig::default()
            };
            build_pools(&questions, &corpus, &index, &cfg)?
        }
    };
    let poisoner = Poisoner::new(ContextParams {
        target_m: a.m,
        k: a.k.unwrap_or_else(|| tag.default_k()),
        data_seed: a.data_seed,
    })?;
    let mut clean = true;
    let contexts: Vec<PoisonedContext> = if a.mixed {
        poisoner.build_mixed_annotation_examples(&questions, &pools)?
    } else {
        poisoner
            .poison_all(&questions, &pools)
            .into_iter()
            .filter_map(|r| {
                r.map_err(|e| {
                    eprintln!("skipped: {e}");
                    clean = false;
                })
                .ok()
            })
            .collect()
    };
    write_contexts(&contexts, create(&a.out)?)?;
    eprintln!("wrote {} contexts to {}", contexts.len(), a.out.display());
    Ok(clean)
}

fn ablate(corpus: &Path, questions: &Path, contexts: &Path, modes: &[String], out: &Path) -> Result<bool> {
    let corpus = Corpus::load(corpus)?;
    let questions: std::collections::BTreeMap<String, QuestionRecord> = load_questions(questions)?
        .into_iter()
        .map(|q| (q.qid.clone(), q))
        .collect();
    let modes = parse_modes(modes)?;
    let mut inputs = Vec::new();
    let mut clean = true;
    for rec in read_context_records(open(contexts)?)? {
        let Some(q) = questions.get(&rec.qid) else {
            bail!("context for unknown question '{}'", rec.qid);
        };
        let ctx = PoisonedContext::from_record(rec, q)?;
        for &mode in &modes {
            match make_input(q, &ctx, &corpus, mode) {
                Ok(i) => inputs.push(i),
                Err(e) => {
                    eprintln!("skipped: {e}");
                    clean = false;
                }
            }
        }
    }
    write_inputs(&inputs, create(out)?)?;
    eprintln!("wrote {} inputs to {}", inputs.len(), out.display());
    Ok(clean)
}

fn predict(a: PredictArgs) -> Result<bool> {
    let inputs = read_inputs(open(&a.inputs)?)?;
    let Some(first) = inputs.first() else {
        bail!("no inputs in {}", a.inputs.display());
    };
    let tag = first.dataset_tag;
    let cfg = match a.predictor {
        PredictorKind::Majority => PredictorConfig::Majority,
        PredictorKind::Overlap => PredictorConfig::Overlap { threshold: a.threshold },
        PredictorKind::Remote => PredictorConfig::Remote {
            endpoint: a
                .endpoint
                .endpoint()?
                .context("--address is required for the remote predictor")?,
            id: a.id.clone(),
        },
    };
    let train = match (&cfg, &a.train_questions) {
        (PredictorConfig::Majority, None) => bail!("--train-questions is required for the majority predictor"),
        (_, Some(p)) => load_questions(p)?,
        (_, None) => Vec::new(),
    };
    let predictor = make_predictor(&cfg, tag, &train)?;
    let preds = predictor.predict_batch(&inputs, a.model_seed)?;
    let failed = preds.iter().filter(|p| p.failed).count();
    write_predictions(&preds, create(&a.out)?)?;
    eprintln!(
        "wrote {} predictions ({failed} failed) to {}",
        preds.len(),
        a.out.display()
    );
    Ok(failed == 0)
}

fn run(a: RunArgs) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(v) = a.output_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = a.corpus {
        cfg.corpus = v;
    }
    if let Some(v) = a.questions {
        cfg.questions = v;
    }
    if let Some(v) = a.k {
        cfg.k = Some(v);
    }
    if let Some(v) = a.m_grid {
        cfg.m_grid = v;
    }
    if let Some(v) = a.data_seeds {
        cfg.data_seeds = v;
    }
    if let Some(v) = a.model_seeds {
        cfg.model_seeds = v;
    }
    if let Some(v) = a.modes {
        cfg.modes = parse_modes(&v)?;
    }
    if let Some(v) = a.budget {
        cfg.retrieval.budget = v;
    }
    if let Some(v) = a.mixed_annotations {
        cfg.mixed_annotations = v;
    }
    if let Some(r) = a.reranker {
        cfg.retrieval.reranker = match r {
            RerankerKind::None => RerankerConfig::None,
            RerankerKind::Jaccard => RerankerConfig::Jaccard,
        };
    }
    let endpoint = a.endpoint.endpoint()?;
    match a.predictor {
        Some(PredictorKind::Majority) => cfg.predictor = PredictorConfig::Majority,
        Some(PredictorKind::Overlap) => {
            cfg.predictor = PredictorConfig::Overlap {
                threshold: a.threshold.unwrap_or(0.1),
            }
        }
        Some(PredictorKind::Remote) => {
            cfg.predictor = PredictorConfig::Remote {
                endpoint: endpoint
                    .clone()
                    .context("--address is required for the remote predictor")?,
                id: "remote".into(),
            }
        }
        None => {}
    }
    match (&mut cfg.predictor, a.threshold, endpoint) {
        (PredictorConfig::Overlap { threshold }, Some(t), _) => *threshold = t,
        (PredictorConfig::Remote { endpoint, .. }, _, Some(e)) => *endpoint = e,
        _ => {}
    }
    let outcome = run_experiment(&cfg)?;
    let n_files: usize = outcome.manifest.runs.iter().map(|r| r.predictions.len()).sum();
    eprintln!(
        "{}: {} prediction files, {} of {} predictions failed, {} stage errors",
        outcome.dir.display(),
        n_files,
        outcome.report.n_failed,
        outcome.report.n_predictions,
        outcome.manifest.errors.len()
    );
    Ok(outcome.is_clean())
}

fn gen_fixture(kind: FixtureKind, out: &Path, questions: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut spec = match kind {
        FixtureKind::Sq => FixtureSpec::strategyqa(),
        FixtureKind::HpqBool => FixtureSpec::hotpot_bool(),
        FixtureKind::HpqExt => FixtureSpec::hotpot_extractive(),
        FixtureKind::Calibration => FixtureSpec::calibration(),
    };
    if let Some(n) = questions {
        spec.questions = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let fx = generate(&spec);
    fx.corpus.write_jsonl(create(&out.join("corpus.jsonl"))?)?;
    write_questions(&fx.questions, create(&out.join("questions.jsonl"))?)?;
    eprintln!(
        "wrote {} paragraphs and {} questions to {}",
        fx.corpus.doc_count(),
        fx.questions.len(),
        out.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest { input, out } => {
            let corpus = Corpus::load(&input)?;
            corpus.write_jsonl(create(&out)?)?;
            eprintln!(
                "{} paragraphs, avg length {:.2} tokens",
                corpus.doc_count(),
                corpus.avg_doc_len()
            );
        }
        Command::Index { corpus, out } => {
            let corpus = Corpus::load(&corpus)?;
            let index = InvertedIndex::build(&corpus)?;
            index.write_to(create(&out)?)?;
            eprintln!("indexed {} paragraphs into {}", index.doc_count(), out.display());
        }
        Command::Split {
            questions,
            train,
            dev,
            test,
            seed,
            out,
        } => {
            let records = load_questions(&questions)?;
            let split = split_dataset(&records, SplitSpec { train, dev, test, seed })?;
            split.write_manifests(&out)?;
            for (name, part) in split.parts() {
                write_questions(part, create(&out.join(format!("{name}.jsonl")))?)?;
            }
        }
        Command::Poison(a) => return poison(a),
        Command::Ablate {
            corpus,
            questions,
            contexts,
            modes,
            out,
        } => return ablate(&corpus, &questions, &contexts, &modes, &out),
        Command::Predict(a) => return predict(a),
        Command::Report { dir } => {
            let outcome = emit_report(&dir)?;
            return Ok(!outcome.manifest.partial && outcome.report.n_failed == 0);
        }
        Command::ExportRerankPairs {
            corpus,
            questions,
            out,
            bm25_negatives,
            other_gold_negatives,
            seed,
            k1,
            b,
        } => {
            let corpus = Corpus::load(&corpus)?;
            let questions = load_questions(&questions)?;
            let index = InvertedIndex::build(&corpus)?;
            let bm25 = Bm25::new(&index, Bm25Params { k1, b });
            let pairs = export_rerank_pairs(
                &questions,
                &bm25,
                PairRatio {
                    bm25_negatives,
                    other_gold_negatives,
                    seed,
                },
            )?;
            write_pairs(&pairs, create(&out)?)?;
            eprintln!("wrote {} pairs to {}", pairs.len(), out.display());
        }
        Command::Run(a) => return run(a),
        Command::GenFixture {
            kind,
            out,
            questions,
            seed,
        } => gen_fixture(kind, &out, questions, seed)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
