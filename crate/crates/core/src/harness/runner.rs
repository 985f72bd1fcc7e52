use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::cache::CacheEntry;
use super::{build_prompt_with_prefix, cache_key, ChatBackend, ChatMessage, HarnessError, ResponseCache};
use crate::qgen::QuestionBank;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub question_id: String,
    pub model: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub retrieved_from_cache: bool,
    pub timestamp: String,
    #[serde(default)]
    pub retries: u32,
    /// Set when no answer was obtained; `raw_text` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LlmResponse {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    /// One entry per bank question, in bank order; failures carry `error`.
    pub responses: Vec<LlmResponse>,
    pub cache_hits: usize,
    pub network_calls: usize,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &LlmResponse> {
        self.responses.iter().filter(|r| !r.is_ok())
    }

    pub fn succeeded(&self) -> impl Iterator<Item = &LlmResponse> {
        self.responses.iter().filter(|r| r.is_ok())
    }

    pub fn is_partial(&self) -> bool {
        self.failures().next().is_some()
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

struct Outcome {
    key: String,
    result: Result<(String, u32), HarnessError>,
    latency_ms: u64,
}

/// Asks every question once, serving repeats from `cache`.
///
/// Distinct prompts are dispatched to at most `parallelism` worker threads;
/// only this thread writes to the cache. Results come back in bank order
/// whatever order the workers finish in.
pub fn run_bank(
    bank: &QuestionBank,
    backend: &dyn ChatBackend,
    cache: &mut ResponseCache,
    parallelism: usize,
    demonstrations: Option<&str>,
) -> RunReport {
    let model = backend.model().to_string();
    let calls_before = backend.calls();
    let prompts: Vec<(String, Vec<ChatMessage>)> = bank
        .questions
        .iter()
        .map(|q| {
            let messages = build_prompt_with_prefix(q, demonstrations);
            (cache_key(&model, &messages), messages)
        })
        .collect();

    // unique uncached prompts, first occurrence order
    let mut pending: Vec<(&str, &[ChatMessage])> = Vec::new();
    let mut queued: HashMap<&str, ()> = HashMap::new();
    for (key, messages) in &prompts {
        if cache.get(key).is_none() && queued.insert(key.as_str(), ()).is_none() {
            pending.push((key.as_str(), messages.as_slice()));
        }
    }
    let cache_hits = prompts.len() - prompts.iter().filter(|(k, _)| queued.contains_key(k.as_str())).count();
    info!("{model}: {} questions, {} to query, {cache_hits} cached", prompts.len(), pending.len());

    let mut fresh: HashMap<String, (Result<(String, u32), String>, u64, String)> = HashMap::new();
    if !pending.is_empty() {
        let workers = parallelism.max(1).min(pending.len());
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<Outcome>();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                let pending = &pending;
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((key, messages)) = pending.get(i) else {
                        break;
                    };
                    let start = Instant::now();
                    let result = backend.complete(messages).map(|c| (c.text, c.retries));
                    let outcome = Outcome {
                        key: key.to_string(),
                        result,
                        latency_ms: start.elapsed().as_millis() as u64,
                    };
                    if tx.send(outcome).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            let total = pending.len();
            for (done, outcome) in rx.iter().enumerate() {
                let stamp = now();
                let result = match outcome.result {
                    Ok((text, retries)) => {
                        let entry = CacheEntry {
                            key: outcome.key.clone(),
                            model: model.clone(),
                            raw_text: text.clone(),
                            timestamp: stamp.clone(),
                        };
                        if let Err(e) = cache.put(entry) {
                            warn!("{e}");
                        }
                        Ok((text, retries))
                    }
                    Err(e) => {
                        warn!("{model}: {e}");
                        Err(e.to_string())
                    }
                };
                if (done + 1) % 100 == 0 || done + 1 == total {
                    info!("{model}: {}/{total} answered", done + 1);
                }
                fresh.insert(outcome.key, (result, outcome.latency_ms, stamp));
            }
        });
    }

    let responses = bank
        .questions
        .iter()
        .zip(&prompts)
        .map(|(q, (key, _))| {
            let base = LlmResponse {
                question_id: q.id.clone(),
                model: model.clone(),
                raw_text: String::new(),
                latency_ms: 0,
                retrieved_from_cache: false,
                timestamp: String::new(),
                retries: 0,
                error: None,
            };
            match fresh.get(key) {
                Some((Ok((text, retries)), latency, stamp)) => LlmResponse {
                    raw_text: text.clone(),
                    latency_ms: *latency,
                    timestamp: stamp.clone(),
                    retries: *retries,
                    ..base
                },
                Some((Err(e), latency, stamp)) => LlmResponse {
                    latency_ms: *latency,
                    timestamp: stamp.clone(),
                    error: Some(e.clone()),
                    ..base
                },
                None => {
                    let hit = cache.get(key).expect("uncached prompts were queued");
                    LlmResponse {
                        raw_text: hit.raw_text.clone(),
                        retrieved_from_cache: true,
                        timestamp: hit.timestamp.clone(),
                        ..base
                    }
                }
            }
        })
        .collect();

    RunReport {
        responses,
        cache_hits,
        network_calls: backend.calls() - calls_before,
    }
}

pub const RESPONSES_FORMAT: &str = "kgprobe-responses";

#[derive(Serialize, Deserialize)]
struct ResponsesHeader {
    format: String,
    version: u32,
}

pub fn write_responses<W: Write>(responses: &[LlmResponse], sink: &mut W) -> io::Result<()> {
    let header = ResponsesHeader {
        format: RESPONSES_FORMAT.into(),
        version: 1,
    };
    serde_json::to_writer(&mut *sink, &header)?;
    sink.write_all(b"\n")?;
    for r in responses {
        serde_json::to_writer(&mut *sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn read_responses<R: BufRead>(source: R) -> io::Result<Vec<LlmResponse>> {
    let bad = |e: serde_json::Error| io::Error::new(io::ErrorKind::InvalidData, e);
    let mut lines = source.lines();
    let header: ResponsesHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?).map_err(bad)?,
        None => return Err(io::Error::new(io::ErrorKind::InvalidData, "empty responses file")),
    };
    if header.format != RESPONSES_FORMAT {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a responses file"));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(bad)?);
        }
    }
    Ok(out)
}
