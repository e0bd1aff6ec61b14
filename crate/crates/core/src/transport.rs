//! JSON transports shared by the predictor gateway and the reranker client.
//!
//! Two transports are supported:
//!
//! - `http`: one `POST` per batch carrying a JSON array of requests; the
//!   response body is a JSON array of responses.
//! - `subprocess`: a long-lived child started through `sh -c`, speaking
//!   newline-delimited JSON on stdin/stdout, one object per line.
//!
//! Responses are matched to requests by their `id` field, never by position.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("protocol error: {reason}; raw payload: {raw}")]
    Protocol { reason: String, raw: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Http,
    Subprocess,
}

/// Where a model lives and how to talk to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub transport: TransportKind,
    /// Base URL for `http`, shell command line for `subprocess`.
    pub address: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_batch_size() -> usize {
    16
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

impl Endpoint {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if self.timeout_ms == 0 {
            return Err("timeout_ms must be positive".into());
        }
        if self.address.trim().is_empty() {
            return Err("address must be non-empty".into());
        }
        Ok(())
    }
}

/// Wire messages expose the id used for matching.
pub trait WireId {
    fn wire_id(&self) -> &str;
}

pub struct Transport {
    inner: Inner,
    timeout: Duration,
}

enum Inner {
    Http { agent: ureq::Agent, url: String },
    Subprocess(Mutex<ChildIo>),
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    // ids whose requests timed out; late answers for them are dropped
    abandoned: HashSet<String>,
}

impl Drop for ChildIo {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Transport {
    /// Opens a transport. `route` is appended to the base URL for `http`.
    pub fn open(endpoint: &Endpoint, route: &str) -> Result<Self, TransportError> {
        endpoint.validate().map_err(TransportError::Unreachable)?;
        let timeout = Duration::from_millis(endpoint.timeout_ms);
        let inner = match endpoint.transport {
            TransportKind::Http => {
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(timeout))
                    .http_status_as_error(false)
                    .build()
                    .into();
                let url = format!("{}{}", endpoint.address.trim_end_matches('/'), route);
                Inner::Http { agent, url }
            }
            TransportKind::Subprocess => Inner::Subprocess(Mutex::new(spawn(&endpoint.address)?)),
        };
        Ok(Self { inner, timeout })
    }

    /// Sends one batch and returns the responses keyed by id.
    ///
    /// Every returned id belongs to `requests`; missing ids are simply absent.
    pub fn exchange<Req, Resp>(&self, requests: &[Req]) -> Result<HashMap<String, Resp>, TransportError>
    where
        Req: Serialize + WireId,
        Resp: DeserializeOwned + WireId,
    {
        if requests.is_empty() {
            return Ok(HashMap::new());
        }
        let pending: HashSet<&str> = requests.iter().map(WireId::wire_id).collect();
        match &self.inner {
            Inner::Http { agent, url } => self.exchange_http(agent, url, requests, &pending),
            Inner::Subprocess(io) => {
                let mut io = io.lock().unwrap_or_else(|e| e.into_inner());
                self.exchange_child(&mut io, requests, &pending)
            }
        }
    }

    fn exchange_http<Req, Resp>(
        &self,
        agent: &ureq::Agent,
        url: &str,
        requests: &[Req],
        pending: &HashSet<&str>,
    ) -> Result<HashMap<String, Resp>, TransportError>
    where
        Req: Serialize + WireId,
        Resp: DeserializeOwned + WireId,
    {
        let body = serde_json::to_string(requests).map_err(|e| TransportError::Protocol {
            reason: format!("cannot encode request: {e}"),
            raw: String::new(),
        })?;
        let response = agent
            .post(url)
            .header("content-type", "application/json")
            .send(body.as_str())
            .map_err(|e| self.classify(e))?;
        let status = response.status().as_u16();
        let raw = response.into_body().read_to_string().map_err(|e| self.classify(e))?;
        if status != 200 {
            return Err(TransportError::Protocol {
                reason: format!("HTTP status {status}"),
                raw,
            });
        }
        let items: Vec<Resp> = serde_json::from_str(&raw).map_err(|e| TransportError::Protocol {
            reason: e.to_string(),
            raw: raw.clone(),
        })?;
        let mut out = HashMap::with_capacity(items.len());
        for item in items {
            let id = item.wire_id().to_string();
            if !pending.contains(id.as_str()) {
                return Err(TransportError::Protocol {
                    reason: format!("response id '{id}' matches no request"),
                    raw,
                });
            }
            out.insert(id, item);
        }
        Ok(out)
    }

    fn exchange_child<Req, Resp>(
        &self,
        io: &mut ChildIo,
        requests: &[Req],
        pending: &HashSet<&str>,
    ) -> Result<HashMap<String, Resp>, TransportError>
    where
        Req: Serialize + WireId,
        Resp: DeserializeOwned + WireId,
    {
        let mut payload = Vec::new();
        for r in requests {
            serde_json::to_writer(&mut payload, r).map_err(|e| TransportError::Protocol {
                reason: format!("cannot encode request: {e}"),
                raw: String::new(),
            })?;
            payload.push(b'\n');
        }
        io.stdin
            .write_all(&payload)
            .and_then(|_| io.stdin.flush())
            .map_err(|e| TransportError::Unreachable(format!("writing to predictor process: {e}")))?;

        let deadline = Instant::now() + self.timeout;
        let mut out = HashMap::with_capacity(requests.len());
        while out.len() < pending.len() {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match io.lines.recv_timeout(remaining) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => {
                    return Err(TransportError::Unreachable(format!(
                        "reading from predictor process: {e}"
                    )))
                }
                Err(RecvTimeoutError::Timeout) => {
                    io.abandoned.extend(
                        pending
                            .iter()
                            .filter(|id| !out.contains_key(**id))
                            .map(|id| id.to_string()),
                    );
                    return Err(TransportError::Timeout(self.timeout.as_millis() as u64));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(TransportError::Unreachable(
                        "predictor process closed its output".into(),
                    ))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let item: Resp = serde_json::from_str(&line).map_err(|e| TransportError::Protocol {
                reason: e.to_string(),
                raw: line.clone(),
            })?;
            let id = item.wire_id().to_string();
            if pending.contains(id.as_str()) {
                out.insert(id, item);
            } else if !io.abandoned.remove(&id) {
                return Err(TransportError::Protocol {
                    reason: format!("response id '{id}' matches no request"),
                    raw: line,
                });
            }
        }
        Ok(out)
    }

    fn classify(&self, e: ureq::Error) -> TransportError {
        match e {
            ureq::Error::Timeout(_) => TransportError::Timeout(self.timeout.as_millis() as u64),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                TransportError::Timeout(self.timeout.as_millis() as u64)
            }
            other => TransportError::Unreachable(other.to_string()),
        }
    }
}

fn spawn(command: &str) -> Result<ChildIo, TransportError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| TransportError::Unreachable(format!("cannot start '{command}': {e}")))?;
    let stdin = child.stdin.take().expect("stdin is piped");
    let stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    Ok(ChildIo {
        child,
        stdin,
        lines: rx,
        abandoned: HashSet::new(),
    })
}
