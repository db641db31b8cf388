//! Chat-completion backends and the in-flight request limiter.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendReply, ChatRequest, LlmConfig, LlmError, Usage};

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, LlmError>;

    fn name(&self) -> &'static str;

    /// Backends whose answers depend on call order must be driven sequentially.
    fn supports_parallel(&self) -> bool {
        true
    }
}

type Responder = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Deterministic backend serving fixtures keyed by request hash.
///
/// An optional responder can script answers for requests without a stored
/// fixture; everything served is remembered so a scripted run can be frozen
/// into a plain fixture set with [`MockBackend::served`].
#[derive(Default)]
pub struct MockBackend {
    fixtures: HashMap<String, String>,
    responder: Option<Responder>,
    served: Mutex<BTreeMap<String, String>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scripted(responder: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        Self { responder: Some(Box::new(responder)), ..Self::default() }
    }

    pub fn from_fixtures(fixtures: impl IntoIterator<Item = (String, String)>) -> Self {
        Self { fixtures: fixtures.into_iter().collect(), ..Self::default() }
    }

    pub fn insert(&mut self, request_hash: impl Into<String>, text: impl Into<String>) {
        self.fixtures.insert(request_hash.into(), text.into());
    }

    pub fn register(&mut self, request: &ChatRequest, text: impl Into<String>) {
        self.insert(request.hash(), text);
    }

    /// Loads every `<hash>.txt` file in a directory.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut fixtures = HashMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                fixtures.insert(stem.to_owned(), std::fs::read_to_string(&path)?);
            }
        }
        Ok(Self { fixtures, ..Self::default() })
    }

    pub fn write_dir(fixtures: &BTreeMap<String, String>, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (hash, text) in fixtures {
            std::fs::write(dir.join(format!("{hash}.txt")), text)?;
        }
        Ok(())
    }

    pub fn served(&self) -> BTreeMap<String, String> {
        self.served.lock().expect("mock lock").clone()
    }

    pub fn fixture_count(&self) -> usize {
        self.fixtures.len()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let hash = request.hash();
        let text = match self.fixtures.get(&hash) {
            Some(t) => t.clone(),
            None => self
                .responder
                .as_ref()
                .and_then(|r| r(request))
                .ok_or_else(|| LlmError::MockFixtureMissing(hash.clone()))?,
        };
        self.served.lock().expect("mock lock").insert(hash, text.clone());
        Ok(BackendReply::text(text))
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}

/// Serves responses recorded in an interaction log, in recorded order per hash.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn new(recorded: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut queues: HashMap<String, VecDeque<String>> = HashMap::new();
        for (hash, text) in recorded {
            queues.entry(hash).or_default().push_back(text);
        }
        Self { queues: Mutex::new(queues) }
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().expect("replay lock").values().map(VecDeque::len).sum()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let hash = request.hash();
        let mut queues = self.queues.lock().expect("replay lock");
        queues
            .get_mut(&hash)
            .and_then(VecDeque::pop_front)
            .map(BackendReply::text)
            .ok_or(LlmError::MockFixtureMissing(hash))
    }

    fn name(&self) -> &'static str {
        "replay"
    }

    fn supports_parallel(&self) -> bool {
        false
    }
}

/// OpenAI-compatible chat completion over HTTP(S).
#[derive(Debug)]
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl LiveBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            api_key,
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        })
    }

    /// Endpoint from the config, bearer token from the configured env var.
    pub fn from_config(config: &LlmConfig) -> Result<Self, LlmError> {
        Self::new(config.endpoint.clone(), std::env::var(&config.api_key_env).ok())
    }

    pub fn with_backoff(mut self, base_delay: Duration) -> Self {
        self.base_delay = base_delay;
        self
    }

    fn body(request: &ChatRequest) -> Value {
        json!({
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_role},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn parse_reply(body: &Value) -> Result<BackendReply, LlmError> {
        let text = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::BackendUnavailable("response has no message content".into()))?;
        let usage = body.get("usage").map(|u| Usage {
            prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        });
        Ok(BackendReply { text: text.to_owned(), usage })
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let body = Self::body(request);
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.base_delay * 2u32.pow(attempt - 1));
            }
            let mut call = self.client.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                call = call.bearer_auth(key);
            }
            match call.send() {
                Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                    last_error = e.to_string();
                }
                Err(e) => return Err(LlmError::BackendUnavailable(e.to_string())),
                Ok(resp) => {
                    let status = resp.status();
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(LlmError::AuthenticationFailure(status.to_string()));
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_error = status.to_string();
                        continue;
                    }
                    if !status.is_success() {
                        return Err(LlmError::BackendUnavailable(status.to_string()));
                    }
                    let value: Value =
                        resp.json().map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
                    return Self::parse_reply(&value);
                }
            }
        }
        Err(LlmError::BackendUnavailable(format!(
            "gave up after {} attempts: {last_error}",
            self.max_retries + 1
        )))
    }

    fn name(&self) -> &'static str {
        "live"
    }
}

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
pub struct InFlightLimiter {
    capacity: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.capacity {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().expect("limiter lock")
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.in_flight.lock().expect("limiter lock") -= 1;
        self.limiter.freed.notify_one();
    }
}
