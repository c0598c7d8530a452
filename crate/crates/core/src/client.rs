//! Completion-endpoint client with an on-disk cache, retry/backoff, and
//! bounded in-flight concurrency.
//!
//! The wire protocol is the plain HTTP JSON completion shape: request
//! `{model, prompt, temperature, max_tokens, n, stop}`, response
//! `{choices: [{text}], usage}`. Endpoint URL and API key come from the
//! `ENDPOINT_URL` / `ENDPOINT_API_KEY` environment variables unless set
//! explicitly. A canned transport replays stored completions for offline
//! runs and tests.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compile::RenderedPrompt;

/// Decoding parameters sent to the endpoint.
///
/// Greedy mode is temperature 0 with a single sample, the setting behind
/// all main results; [`DecodeParams::self_consistency`] is the 5-path
/// sampling preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub n_samples: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_new_tokens: 512,
            n_samples: 1,
            stop_sequences: vec![],
        }
    }
}

impl DecodeParams {
    /// Greedy decoding (temperature 0, one sample).
    pub fn greedy() -> Self {
        DecodeParams::default()
    }

    /// Sampling preset for majority-vote decoding. The path count comes
    /// from the 5-path setup; the temperature is this tool's choice.
    pub fn self_consistency(paths: u32) -> Self {
        DecodeParams {
            temperature: 0.7,
            n_samples: paths,
            ..DecodeParams::default()
        }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0 && self.n_samples == 1
    }
}

/// Token usage as reported by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One cached completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub cache_key: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    pub latency_ms: u64,
}

/// Uniquely identifies (model, prompt, decode params, sample index).
pub fn cache_key(model: &str, prompt_hash: &str, params: &DecodeParams, sample_index: u32) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0]);
    hasher.update(prompt_hash.as_bytes());
    hasher.update([0]);
    hasher.update(format!("{:?}", params.temperature).as_bytes());
    hasher.update([0]);
    hasher.update(params.max_new_tokens.to_le_bytes());
    hasher.update(params.n_samples.to_le_bytes());
    for stop in &params.stop_sequences {
        hasher.update(stop.as_bytes());
        hasher.update([0]);
    }
    hasher.update(sample_index.to_le_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint authentication failed: {0}")]
    Auth(String),
    #[error("prompt exceeds the model's context window: {0}")]
    ContextLength(String),
    #[error("endpoint error after {attempts} attempts: {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("permanent endpoint error: {0}")]
    Permanent(String),
    #[error("endpoint returned {expected} choices were requested but {got} arrived")]
    ShortResponse { expected: usize, got: usize },
    #[error("cache io error at {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no endpoint configured: set ENDPOINT_URL or pass an endpoint explicitly")]
    NoEndpoint,
}

/// Transport-level failure classification; only `Transient` is retried.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("authentication: {0}")]
    Auth(String),
    #[error("context length: {0}")]
    ContextLength(String),
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent: {0}")]
    Permanent(String),
}

/// Wire request for the completion endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub n: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionChoice {
    pub text: String,
}

/// Wire response from the completion endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub choices: Vec<CompletionChoice>,
    #[serde(default)]
    pub usage: Option<Usage>,
}

/// Anything that can serve completion requests.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError>;
    fn describe(&self) -> String;
}

// --- HTTP transport --------------------------------------------------------

/// Real HTTP endpoint speaking the JSON completion protocol.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        HttpTransport {
            url: url.into(),
            api_key,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(300))
                .build(),
        }
    }

    /// Builds from `ENDPOINT_URL` / `ENDPOINT_API_KEY`.
    pub fn from_env() -> Result<Self, ClientError> {
        let url = std::env::var("ENDPOINT_URL").map_err(|_| ClientError::NoEndpoint)?;
        let api_key = std::env::var("ENDPOINT_API_KEY").ok();
        Ok(HttpTransport::new(url, api_key))
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        let mut req = self.agent.post(&self.url).set("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(request)
            .map_err(|e| TransportError::Permanent(format!("request serialization: {e}")))?;
        match req.send_string(&body) {
            Ok(response) => {
                let text = response
                    .into_string()
                    .map_err(|e| TransportError::Transient(format!("read body: {e}")))?;
                serde_json::from_str(&text)
                    .map_err(|e| TransportError::Permanent(format!("malformed response: {e}")))
            }
            Err(ureq::Error::Status(code, response)) => {
                let body = response.into_string().unwrap_or_default();
                Err(classify_status(code, &body))
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::Transient(t.to_string())),
        }
    }

    fn describe(&self) -> String {
        format!("http:{}", self.url)
    }
}

fn classify_status(code: u16, body: &str) -> TransportError {
    let lower = body.to_lowercase();
    match code {
        401 | 403 => TransportError::Auth(format!("HTTP {code}: {body}")),
        400 | 413 if lower.contains("context") || lower.contains("length") || lower.contains("too long") => {
            TransportError::ContextLength(format!("HTTP {code}: {body}"))
        }
        408 | 429 | 500 | 502 | 503 | 504 => {
            TransportError::Transient(format!("HTTP {code}: {body}"))
        }
        _ => TransportError::Permanent(format!("HTTP {code}: {body}")),
    }
}

// --- Canned transport --------------------------------------------------------

/// One canned entry: a question and its stored completions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CannedCompletion {
    pub question: String,
    pub completions: Vec<String>,
}

/// Offline mock endpoint replaying stored completions.
///
/// The target question is recovered from the final `Question:` block of
/// the prompt and matched exactly; sample `i` receives completion
/// `i % completions.len()`. Unknown questions get a fixed fallback text
/// with no answer marker.
pub struct CannedTransport {
    by_question: HashMap<String, Vec<String>>,
    fallback: String,
}

impl CannedTransport {
    pub fn new(entries: Vec<CannedCompletion>) -> Self {
        let by_question = entries
            .into_iter()
            .map(|e| (e.question, e.completions))
            .collect();
        CannedTransport {
            by_question,
            fallback: "I am not sure how to answer this question.".to_string(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let text = fs::read_to_string(path).map_err(|source| ClientError::CacheIo {
            path: path.display().to_string(),
            source,
        })?;
        let entries: Vec<CannedCompletion> = serde_json::from_str(&text)
            .map_err(|e| ClientError::Permanent(format!("malformed canned file: {e}")))?;
        Ok(CannedTransport::new(entries))
    }

    fn target_question(prompt: &str) -> Option<&str> {
        let start = prompt.rfind("Question: ")? + "Question: ".len();
        let rest = &prompt[start..];
        let end = rest.find("\nAnswer:").unwrap_or(rest.len());
        Some(rest[..end].trim())
    }
}

impl Transport for CannedTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, TransportError> {
        let question = Self::target_question(&request.prompt).unwrap_or("");
        let texts = self.by_question.get(question);
        let mut choices = Vec::with_capacity(request.n as usize);
        for i in 0..request.n as usize {
            let text = match texts {
                Some(list) if !list.is_empty() => list[i % list.len()].clone(),
                _ => self.fallback.clone(),
            };
            choices.push(CompletionChoice { text });
        }
        let prompt_tokens = request.prompt.split_whitespace().count() as u64;
        let completion_tokens: u64 = choices
            .iter()
            .map(|c| c.text.split_whitespace().count() as u64)
            .sum();
        Ok(CompletionResponse {
            choices,
            usage: Some(Usage {
                prompt_tokens,
                completion_tokens,
            }),
        })
    }

    fn describe(&self) -> String {
        format!("mock:{} canned questions", self.by_question.len())
    }
}

// --- Cache --------------------------------------------------------------------

/// Append-only on-disk key-value store of completion records.
///
/// Each line of `cache.jsonl` is one JSON record; the latest line for a
/// key wins, so rewrites are appends and a corrupted line invalidates
/// only itself. Appends take a lock, giving per-key atomicity for
/// concurrent writers.
pub struct CompletionCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, CompletionRecord>>,
    file: Mutex<File>,
    corrupt_lines: u64,
}

/// Summary counters for `cache stats`.
#[derive(Debug, Clone, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub file_bytes: u64,
    pub corrupt_lines: u64,
}

impl CompletionCache {
    /// Opens (creating if needed) the cache under a directory.
    pub fn open(dir: &Path) -> Result<Self, ClientError> {
        fs::create_dir_all(dir).map_err(|source| ClientError::CacheIo {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join("cache.jsonl");
        let mut entries = HashMap::new();
        let mut corrupt_lines = 0;
        if path.exists() {
            let file = File::open(&path).map_err(|source| ClientError::CacheIo {
                path: path.display().to_string(),
                source,
            })?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|source| ClientError::CacheIo {
                    path: path.display().to_string(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CompletionRecord>(&line) {
                    Ok(record) => {
                        entries.insert(record.cache_key.clone(), record);
                    }
                    Err(_) => corrupt_lines += 1,
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| ClientError::CacheIo {
                path: path.display().to_string(),
                source,
            })?;
        Ok(CompletionCache {
            path,
            entries: Mutex::new(entries),
            file: Mutex::new(file),
            corrupt_lines,
        })
    }

    pub fn get(&self, key: &str) -> Option<CompletionRecord> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn put(&self, record: &CompletionRecord) -> Result<(), ClientError> {
        let line = serde_json::to_string(record).expect("record serializes");
        {
            let mut file = self.file.lock().unwrap();
            writeln!(file, "{line}").map_err(|source| ClientError::CacheIo {
                path: self.path.display().to_string(),
                source,
            })?;
            file.flush().map_err(|source| ClientError::CacheIo {
                path: self.path.display().to_string(),
                source,
            })?;
        }
        self.entries
            .lock()
            .unwrap()
            .insert(record.cache_key.clone(), record.clone());
        Ok(())
    }

    pub fn stats(&self) -> CacheStats {
        let file_bytes = fs::metadata(&self.path).map(|m| m.len()).unwrap_or(0);
        CacheStats {
            entries: self.entries.lock().unwrap().len(),
            file_bytes,
            corrupt_lines: self.corrupt_lines,
        }
    }

    /// Rewrites the file keeping only the latest record per key.
    pub fn gc(&self) -> Result<CacheStats, ClientError> {
        let entries = self.entries.lock().unwrap();
        let mut file = self.file.lock().unwrap();
        let mut keys: Vec<&String> = entries.keys().collect();
        keys.sort();
        let mut buf = String::new();
        for key in keys {
            buf.push_str(&serde_json::to_string(&entries[key]).expect("record serializes"));
            buf.push('\n');
        }
        fs::write(&self.path, &buf).map_err(|source| ClientError::CacheIo {
            path: self.path.display().to_string(),
            source,
        })?;
        *file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|source| ClientError::CacheIo {
                path: self.path.display().to_string(),
                source,
            })?;
        drop(file);
        drop(entries);
        Ok(self.stats())
    }
}

// --- Client --------------------------------------------------------------------

const MAX_ATTEMPTS: u32 = 5;

/// Counting semaphore bounding in-flight endpoint requests.
struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Gate {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
    }

    fn release(&self) {
        *self.permits.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

/// Completion client: cache first, endpoint on miss with retry/backoff,
/// at most K requests in flight. Shareable across worker threads.
pub struct CompletionClient {
    transport: Box<dyn Transport>,
    cache: CompletionCache,
    gate: Gate,
    base_delay: Duration,
    network_calls: AtomicU64,
}

impl CompletionClient {
    /// Default in-flight request bound, mirroring the fixed batch size of
    /// 3 used for every benchmark.
    pub const DEFAULT_CONCURRENCY: usize = 3;

    pub fn new(transport: Box<dyn Transport>, cache: CompletionCache) -> Self {
        CompletionClient {
            transport,
            cache,
            gate: Gate::new(Self::DEFAULT_CONCURRENCY),
            base_delay: Duration::from_millis(200),
            network_calls: AtomicU64::new(0),
        }
    }

    pub fn with_concurrency(mut self, permits: usize) -> Self {
        self.gate = Gate::new(permits);
        self
    }

    /// Shrinks retry backoff; used by tests.
    pub fn with_base_delay(mut self, delay: Duration) -> Self {
        self.base_delay = delay;
        self
    }

    /// Number of endpoint requests actually attempted (cache misses,
    /// counting each retry).
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(AtomicOrdering::Relaxed)
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    pub fn cache(&self) -> &CompletionCache {
        &self.cache
    }

    pub fn describe_transport(&self) -> String {
        self.transport.describe()
    }

    /// Completes a prompt, returning one record per sample index.
    ///
    /// The cache is consulted per sample index first; all misses go to
    /// the endpoint in a single request, and fresh results are persisted
    /// before returning.
    pub fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &DecodeParams,
        model: &str,
    ) -> Result<Vec<CompletionRecord>, ClientError> {
        let n = params.n_samples.max(1);
        let mut records: Vec<Option<CompletionRecord>> = Vec::with_capacity(n as usize);
        let mut misses: Vec<u32> = Vec::new();
        for i in 0..n {
            let key = cache_key(model, &prompt.hash, params, i);
            match self.cache.get(&key) {
                Some(record) => records.push(Some(record)),
                None => {
                    misses.push(i);
                    records.push(None);
                }
            }
        }
        if !misses.is_empty() {
            let request = CompletionRequest {
                model: model.to_string(),
                prompt: prompt.text.clone(),
                temperature: params.temperature,
                max_tokens: params.max_new_tokens,
                n: misses.len() as u32,
                stop: params.stop_sequences.clone(),
            };
            let started = Instant::now();
            let response = self.call_with_retry(&request)?;
            let latency_ms = started.elapsed().as_millis() as u64;
            if response.choices.len() < misses.len() {
                return Err(ClientError::ShortResponse {
                    expected: misses.len(),
                    got: response.choices.len(),
                });
            }
            for (choice, sample_index) in response.choices.iter().zip(misses.iter()) {
                let record = CompletionRecord {
                    cache_key: cache_key(model, &prompt.hash, params, *sample_index),
                    text: choice.text.clone(),
                    usage: response.usage,
                    latency_ms,
                };
                self.cache.put(&record)?;
                records[*sample_index as usize] = Some(record);
            }
        }
        Ok(records.into_iter().map(|r| r.expect("filled above")).collect())
    }

    fn call_with_retry(&self, request: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        let mut last_message = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            self.gate.acquire();
            self.network_calls.fetch_add(1, AtomicOrdering::Relaxed);
            let result = self.transport.complete(request);
            self.gate.release();
            match result {
                Ok(response) => return Ok(response),
                Err(TransportError::Auth(m)) => return Err(ClientError::Auth(m)),
                Err(TransportError::ContextLength(m)) => return Err(ClientError::ContextLength(m)),
                Err(TransportError::Permanent(m)) => return Err(ClientError::Permanent(m)),
                Err(TransportError::Transient(m)) => {
                    last_message = m;
                    if attempt < MAX_ATTEMPTS {
                        std::thread::sleep(backoff_delay(self.base_delay, attempt));
                    }
                }
            }
        }
        Err(ClientError::Exhausted {
            attempts: MAX_ATTEMPTS,
            message: last_message,
        })
    }
}

/// Exponential backoff with uniform jitter, capped at 30x the base.
fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let factor = 1u32 << (attempt - 1).min(4);
    let nominal = base.saturating_mul(factor);
    let capped = nominal.min(base.saturating_mul(30));
    let jitter = rand::thread_rng().gen_range(0.5..1.5);
    Duration::from_secs_f64(capped.as_secs_f64() * jitter)
}
