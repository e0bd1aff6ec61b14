//! QA predictors: the out-of-process gateway and built-in baselines.
//!
//! Remote predictors speak `{"id","question","context","dataset_tag"}` →
//! `{"id","answer"}`. Over HTTP a batch is a JSON array posted to
//! `/v1/predict`; over a subprocess each object is one line.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ablation::{AblationInput, AblationMode};
use crate::dataset::{Answer, DatasetTag};
use crate::retrieval::jaccard;
use crate::transport::{Endpoint, Transport, TransportError, WireId};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("majority baseline needs at least one training label")]
    EmptyLabels,
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("malformed prediction at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// One answer for one (qid, mode) input. A line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub mode: AblationMode,
    pub target_m: f64,
    pub data_seed: u64,
    pub model_seed: u64,
    pub answer: Option<Answer>,
    pub failed: bool,
    pub predictor_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock time; kept out of the file so reruns stay byte-identical.
    #[serde(skip)]
    pub latency_ms: f64,
}

impl Prediction {
    fn answered(input: &AblationInput, model_seed: u64, predictor_id: &str, answer: Answer) -> Self {
        Self {
            qid: input.qid.clone(),
            mode: input.mode,
            target_m: input.target_m,
            data_seed: input.data_seed,
            model_seed,
            answer: Some(answer),
            failed: false,
            predictor_id: predictor_id.to_string(),
            error: None,
            latency_ms: 0.0,
        }
    }

    fn failure(input: &AblationInput, model_seed: u64, predictor_id: &str, error: String) -> Self {
        Self {
            answer: None,
            failed: true,
            error: Some(error),
            ..Self::answered(input, model_seed, predictor_id, Answer::Bool(false))
        }
    }
}

pub trait Predictor: Send + Sync {
    fn id(&self) -> &str;

    /// Exactly one prediction per input, in input order.
    fn predict_batch(&self, inputs: &[AblationInput], model_seed: u64) -> Result<Vec<Prediction>, GatewayError>;
}

/// Maps model text to an answer. Boolean datasets accept yes/true/no/false
/// (any case); anything else is `None`.
pub fn normalize_answer(raw: &str, tag: DatasetTag) -> Option<Answer> {
    if !tag.is_boolean() {
        return Some(Answer::Text(raw.trim().to_string()));
    }
    match raw.trim().to_lowercase().as_str() {
        "yes" | "true" => Some(Answer::Bool(true)),
        "no" | "false" => Some(Answer::Bool(false)),
        _ => None,
    }
}

/// Always answers the most frequent training label.
#[derive(Debug, Clone)]
pub struct MajorityPredictor {
    label: Answer,
    id: String,
}

/// Majority over Boolean labels; a tie goes to `true`.
pub fn builtin_majority(train_answers: &[bool]) -> Result<MajorityPredictor, GatewayError> {
    if train_answers.is_empty() {
        return Err(GatewayError::EmptyLabels);
    }
    let yes = train_answers.iter().filter(|&&a| a).count();
    let label = yes * 2 >= train_answers.len();
    Ok(MajorityPredictor {
        label: Answer::Bool(label),
        id: "builtin_majority".into(),
    })
}

impl MajorityPredictor {
    /// Majority over any answers. Boolean ties go to `true`; string ties to
    /// the lexicographically smallest answer.
    pub fn from_answers(answers: &[Answer]) -> Result<Self, GatewayError> {
        if answers.iter().all(Answer::is_bool) {
            let labels: Vec<bool> = answers.iter().filter_map(Answer::as_bool).collect();
            return builtin_majority(&labels);
        }
        let mut counts: BTreeMap<&Answer, usize> = BTreeMap::new();
        for a in answers {
            *counts.entry(a).or_default() += 1;
        }
        // BTreeMap order + strict `>` keeps the smallest answer on ties
        let mut best: Option<(&Answer, usize)> = None;
        for (a, c) in counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((a, c));
            }
        }
        let (label, _) = best.ok_or(GatewayError::EmptyLabels)?;
        Ok(Self {
            label: label.clone(),
            id: "builtin_majority".into(),
        })
    }

    pub fn label(&self) -> &Answer {
        &self.label
    }
}

impl Predictor for MajorityPredictor {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict_batch(&self, inputs: &[AblationInput], model_seed: u64) -> Result<Vec<Prediction>, GatewayError> {
        Ok(inputs
            .iter()
            .map(|i| Prediction::answered(i, model_seed, &self.id, self.label.clone()))
            .collect())
    }
}

/// Yes iff question/context token Jaccard reaches `threshold`. An empty
/// context always answers no.
pub fn builtin_overlap(input: &AblationInput, threshold: f64) -> bool {
    if input.context.is_empty() {
        return false;
    }
    jaccard(&input.question, &input.context.join(" ")) >= threshold
}

#[derive(Debug, Clone)]
pub struct OverlapPredictor {
    threshold: f64,
    id: String,
}

impl OverlapPredictor {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            id: "builtin_overlap".into(),
        }
    }
}

impl Predictor for OverlapPredictor {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict_batch(&self, inputs: &[AblationInput], model_seed: u64) -> Result<Vec<Prediction>, GatewayError> {
        Ok(inputs
            .iter()
            .map(|i| {
                if i.dataset_tag.is_boolean() {
                    let a = Answer::Bool(builtin_overlap(i, self.threshold));
                    Prediction::answered(i, model_seed, &self.id, a)
                } else {
                    Prediction::failure(i, model_seed, &self.id, "overlap baseline is Boolean-only".into())
                }
            })
            .collect())
    }
}

#[derive(Debug, Serialize)]
struct PredictRequest<'a> {
    id: String,
    question: &'a str,
    context: &'a [String],
    dataset_tag: &'static str,
    model_seed: u64,
}

impl WireId for PredictRequest<'_> {
    fn wire_id(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Deserialize)]
struct PredictResponse {
    id: String,
    answer: String,
}

impl WireId for PredictResponse {
    fn wire_id(&self) -> &str {
        &self.id
    }
}

/// Predictor behind an HTTP or subprocess endpoint.
pub struct RemotePredictor {
    endpoint: Endpoint,
    transport: Transport,
    id: String,
    counter: AtomicU64,
}

impl RemotePredictor {
    pub fn connect(endpoint: Endpoint, id: impl Into<String>) -> Result<Self, GatewayError> {
        endpoint.validate().map_err(GatewayError::InvalidEndpoint)?;
        let transport = Transport::open(&endpoint, "/v1/predict")?;
        Ok(Self {
            endpoint,
            transport,
            id: id.into(),
            counter: AtomicU64::new(0),
        })
    }

    fn run_chunk(&self, chunk: &[AblationInput], model_seed: u64) -> Result<Vec<Prediction>, GatewayError> {
        let base = self.counter.fetch_add(chunk.len() as u64, Ordering::Relaxed);
        let requests: Vec<PredictRequest<'_>> = chunk
            .iter()
            .enumerate()
            .map(|(i, input)| PredictRequest {
                id: format!("{}:{}:{}", base + i as u64, input.qid, input.mode),
                question: &input.question,
                context: &input.context,
                dataset_tag: input.dataset_tag.as_str(),
                model_seed,
            })
            .collect();
        let started = Instant::now();
        let outcome = self.transport.exchange::<_, PredictResponse>(&requests);
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        let mut responses: HashMap<String, PredictResponse> = match outcome {
            Ok(r) => r,
            Err(TransportError::Timeout(ms)) => {
                return Ok(chunk
                    .iter()
                    .map(|i| Prediction::failure(i, model_seed, &self.id, format!("timed out after {ms} ms")))
                    .collect())
            }
            Err(e) => return Err(e.into()),
        };
        Ok(chunk
            .iter()
            .zip(&requests)
            .map(|(input, req)| {
                let mut p = match responses.remove(&req.id) {
                    None => Prediction::failure(input, model_seed, &self.id, "no response for request".into()),
                    Some(resp) => match normalize_answer(&resp.answer, input.dataset_tag) {
                        Some(a) => Prediction::answered(input, model_seed, &self.id, a),
                        None => Prediction::failure(
                            input,
                            model_seed,
                            &self.id,
                            format!("unrecognized Boolean answer '{}'", resp.answer),
                        ),
                    },
                };
                p.latency_ms = latency_ms;
                p
            })
            .collect())
    }
}

type ChunkResult = Result<Vec<Prediction>, GatewayError>;

impl Predictor for RemotePredictor {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict_batch(&self, inputs: &[AblationInput], model_seed: u64) -> Result<Vec<Prediction>, GatewayError> {
        let chunks: Vec<&[AblationInput]> = inputs.chunks(self.endpoint.batch_size).collect();
        let slots: Vec<Mutex<Option<ChunkResult>>> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.endpoint.max_in_flight.clamp(1, chunks.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let result = self.run_chunk(chunks[i], model_seed);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
                });
            }
        });
        let mut out = Vec::with_capacity(inputs.len());
        for slot in slots {
            let result = slot
                .into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every chunk is processed");
            out.extend(result?);
        }
        Ok(out)
    }
}

pub fn write_predictions<W: Write>(predictions: &[Prediction], mut writer: W) -> std::io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, GatewayError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let malformed = |reason: String| GatewayError::Malformed { line: idx + 1, reason };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(out)
}
