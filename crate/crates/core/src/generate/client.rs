use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::parse::{parse_generation, RowRejection};
use crate::data::{Dataset, Provenance, Record, Schema};
use crate::error::{Error, Result};
use crate::prompt::{refresh_due, PromptBundle};

/// Environment variable holding the bearer token for the endpoint.
pub const API_KEY_ENV: &str = "ICBIAS_API_KEY";

/// Chat-completions endpoint settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Samples requested per call by the unconstrained templates.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Maximum in-flight requests.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Fraction of failed parses above which the run is abandoned.
    #[serde(default = "default_failure_rate")]
    pub max_parse_failure_rate: f64,
}

fn default_path() -> String {
    "/v1/chat/completions".into()
}
fn default_temperature() -> f64 {
    0.7
}
fn default_retries() -> usize {
    3
}
fn default_timeout() -> f64 {
    60.0
}
fn default_batch() -> usize {
    2
}
fn default_concurrency() -> usize {
    4
}
fn default_failure_rate() -> f64 {
    0.5
}

impl EndpointConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            path: default_path(),
            model: model.into(),
            temperature: default_temperature(),
            max_retries: default_retries(),
            timeout_secs: default_timeout(),
            batch: default_batch(),
            concurrency: default_concurrency(),
            max_parse_failure_rate: default_failure_rate(),
        }
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("endpoint batch must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("endpoint concurrency must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("endpoint timeout must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_parse_failure_rate) {
            return Err(Error::Config("max_parse_failure_rate outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body; `call_index` and `attempt` are bookkeeping only.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip)]
    pub call_index: usize,
    #[serde(skip)]
    pub attempt: usize,
}

impl ChatRequest {
    pub fn new(cfg: &EndpointConfig, bundle: &PromptBundle, call_index: usize, attempt: usize) -> Self {
        ChatRequest {
            model: cfg.model.clone(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: bundle.system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: bundle.user.clone(),
                },
            ],
            temperature: cfg.temperature,
            call_index,
            attempt,
        }
    }
}

/// Delivers a request and returns the first choice's message content.
pub trait Transport: Sync {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, String>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &EndpointConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpTransport {
            client,
            url: cfg.url(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }
}

/// Pull `choices[0].message.content` out of a completion response.
pub fn extract_content(body: &str) -> std::result::Result<String, String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("response body is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| "response has no choices[0].message.content".into())
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            let snippet: String = body.chars().take(200).collect();
            return Err(format!("HTTP {status}: {snippet}"));
        }
        extract_content(&body)
    }
}

/// Replays canned responses: a fixed script per call index, then a
/// fallback queue shared by every other request.
#[derive(Default)]
pub struct ScriptedTransport {
    by_call: HashMap<usize, Vec<std::result::Result<String, String>>>,
    queue: Mutex<Vec<std::result::Result<String, String>>>,
    requests: Mutex<Vec<(usize, usize, String)>>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        ScriptedTransport::default()
    }

    /// Responses for successive attempts of `call_index`.
    pub fn on_call(mut self, call_index: usize, responses: Vec<std::result::Result<String, String>>) -> Self {
        self.by_call.insert(call_index, responses);
        self
    }

    /// Responses handed out in order to calls without a script.
    pub fn then(self, responses: Vec<std::result::Result<String, String>>) -> Self {
        self.queue.lock().unwrap().extend(responses.into_iter().rev());
        self
    }

    /// `(call_index, attempt, request body)` of every request seen.
    pub fn requests(&self) -> Vec<(usize, usize, String)> {
        let mut r = self.requests.lock().unwrap().clone();
        r.sort();
        r
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        let body = serde_json::to_string(request).expect("request serializes");
        self.requests
            .lock()
            .unwrap()
            .push((request.call_index, request.attempt, body));
        if let Some(script) = self.by_call.get(&request.call_index) {
            return script
                .get(request.attempt)
                .or(script.last())
                .cloned()
                .unwrap_or_else(|| Err("empty script".into()));
        }
        self.queue
            .lock()
            .unwrap()
            .pop()
            .unwrap_or_else(|| Err("connection refused".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    ParseError,
    TransportError,
}

/// One request attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub call_index: usize,
    pub attempt: usize,
    pub prompt_index: usize,
    pub refreshed: bool,
    pub outcome: CallOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rows_accepted: usize,
    pub dropped: Vec<RowRejection>,
    pub model: String,
    pub temperature: f64,
}

/// Append-only record of a generation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationLog {
    pub entries: Vec<LogEntry>,
}

impl GenerationLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_failures(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.outcome == CallOutcome::ParseError)
            .count()
    }
}

/// Generation result plus its log.
#[derive(Clone, Debug)]
pub struct LlmRun {
    pub data: Dataset,
    pub log: GenerationLog,
    pub prompts: Vec<PromptBundle>,
}

enum SlotResult {
    Rows(Vec<Record>),
    Failed(String),
}

const MIN_ATTEMPTS_FOR_RATE: usize = 10;

/// Generate `n_total` valid rows from a chat-completions endpoint.
///
/// Call `c` uses prompt `c / refresh_period`, built on first use by
/// `make_bundle`. Calls run in windows of `cfg.concurrency`; each call is
/// retried up to `cfg.max_retries` times on transport or parse failure.
/// Invalid rows are dropped and logged.
pub fn llm_generate<F>(
    cfg: &EndpointConfig,
    transport: &dyn Transport,
    schema: &Arc<Schema>,
    n_total: usize,
    refresh_period: usize,
    make_bundle: F,
) -> Result<LlmRun>
where
    F: Fn(usize) -> Result<PromptBundle>,
{
    cfg.validate()?;
    if n_total == 0 {
        return Err(Error::InvalidArgument("n_total must be at least 1".into()));
    }
    if refresh_period == 0 {
        return Err(Error::InvalidArgument("refresh period must be positive".into()));
    }
    let mut prompts: Vec<PromptBundle> = Vec::new();
    let mut log = GenerationLog::default();
    let mut rows: Vec<Record> = Vec::with_capacity(n_total);
    let mut call = 0usize;
    let mut budget: Option<usize> = None;

    while rows.len() < n_total {
        let needed_prompt = call / refresh_period;
        while prompts.len() <= needed_prompt {
            let mut b = make_bundle(prompts.len())?;
            b.refresh_counter = prompts.len();
            prompts.push(b);
        }
        let per_call = prompts[needed_prompt].samples_per_call.max(1);
        let budget = *budget.get_or_insert(n_total.div_ceil(per_call) * (cfg.max_retries + 1));
        if call >= budget {
            return Err(Error::Transport {
                attempts: log.entries.len(),
                message: format!("call budget of {budget} exhausted with {} of {n_total} rows", rows.len()),
            });
        }
        let remaining_calls = (n_total - rows.len()).div_ceil(per_call);
        let width = cfg.concurrency.min(remaining_calls).min(budget - call);
        let slots: Vec<usize> = (call..call + width).collect();
        for &s in &slots {
            while prompts.len() <= s / refresh_period {
                let mut b = make_bundle(prompts.len())?;
                b.refresh_counter = prompts.len();
                prompts.push(b);
            }
        }

        let results: Vec<(SlotResult, Vec<LogEntry>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = slots
                .iter()
                .map(|&s| {
                    let bundle = &prompts[s / refresh_period];
                    scope.spawn(move || run_slot(cfg, transport, schema, bundle, s, refresh_period))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("slot thread")).collect()
        });

        for (res, entries) in results {
            log.entries.extend(entries);
            match res {
                SlotResult::Rows(r) => rows.extend(r),
                SlotResult::Failed(message) => {
                    return Err(Error::Transport {
                        attempts: cfg.max_retries + 1,
                        message,
                    })
                }
            }
        }
        check_failure_rate(cfg, &log, MIN_ATTEMPTS_FOR_RATE)?;
        call += width;
    }
    check_failure_rate(cfg, &log, 1)?;
    rows.truncate(n_total);
    Ok(LlmRun {
        data: Dataset::new(schema.clone(), rows, Provenance::Synthetic)?,
        log,
        prompts,
    })
}

fn check_failure_rate(cfg: &EndpointConfig, log: &GenerationLog, min_attempts: usize) -> Result<()> {
    let attempts = log.entries.len();
    if attempts < min_attempts {
        return Ok(());
    }
    let rate = log.parse_failures() as f64 / attempts as f64;
    if rate > cfg.max_parse_failure_rate {
        return Err(Error::ParseFailureRate {
            rate,
            threshold: cfg.max_parse_failure_rate,
        });
    }
    Ok(())
}

fn run_slot(
    cfg: &EndpointConfig,
    transport: &dyn Transport,
    schema: &Schema,
    bundle: &PromptBundle,
    call_index: usize,
    refresh_period: usize,
) -> (SlotResult, Vec<LogEntry>) {
    let mut entries = Vec::new();
    let mut last_error = String::new();
    let mut any_transport_ok = false;
    for attempt in 0..=cfg.max_retries {
        let req = ChatRequest::new(cfg, bundle, call_index, attempt);
        let mut entry = LogEntry {
            call_index,
            attempt,
            prompt_index: call_index / refresh_period,
            refreshed: refresh_due(call_index, refresh_period) && attempt == 0,
            outcome: CallOutcome::Ok,
            error: None,
            rows_accepted: 0,
            dropped: Vec::new(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
        };
        match transport.send(&req) {
            Err(e) => {
                entry.outcome = CallOutcome::TransportError;
                entry.error = Some(e.clone());
                last_error = e;
                entries.push(entry);
            }
            Ok(text) => {
                any_transport_ok = true;
                match parse_generation(&text, schema, bundle.samples_per_call) {
                    Err(e) => {
                        entry.outcome = CallOutcome::ParseError;
                        entry.error = Some(e.to_string());
                        last_error = e.to_string();
                        entries.push(entry);
                    }
                    Ok(batch) => {
                        entry.rows_accepted = batch.records.len();
                        entry.dropped = batch.rejected;
                        entries.push(entry);
                        return (SlotResult::Rows(batch.records), entries);
                    }
                }
            }
        }
    }
    if any_transport_ok {
        // parse failures only: the call yields nothing, the rate check decides
        (SlotResult::Rows(Vec::new()), entries)
    } else {
        (SlotResult::Failed(last_error), entries)
    }
}
