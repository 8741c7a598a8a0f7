//! Chat-completion client with a content-addressed cache, bounded retries,
//! a sliding-window rate limiter and a scripted mock backend.
//!
//! The API key is read from the environment variable named in the config at
//! call time. Its value is never stored, logged, cached or put in an error.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::PromptText;

pub const CACHE_FILE: &str = "completions.jsonl";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("backend rejected credentials (HTTP {status})")]
    AuthError { status: u16 },
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingSecret(String),
    #[error("backend returned HTTP {status}: {message}")]
    RequestRejected { status: u16, message: String },
    #[error("backend response is not a chat completion: {0}")]
    ResponseMalformed(String),
    #[error("no mock rule matches the prompt")]
    UnmatchedPrompt,
    #[error("mock rules {0:?} all match the prompt")]
    AmbiguousPrompt(Vec<usize>),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(String),
}

/// One scripted mock answer. `pattern` is a regex searched in the prompt
/// text, or `sha256:<hex>` to match one exact prompt. For regex rules the
/// response may reference capture groups (`$1`, `${name}`); write `$$` for a
/// literal dollar sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_ref: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Requests per minute; 0 disables limiting.
    pub rate_limit: u32,
    pub concurrency: usize,
    /// First retry delay; later delays double.
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub mock: Option<Vec<MockRule>>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: "http://localhost:8000/v1".into(),
            model_name: "default".into(),
            api_key_ref: None,
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 60.0,
            max_retries: 3,
            rate_limit: 60,
            concurrency: 4,
            backoff_ms: 500,
            cache_dir: None,
            mock: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::Config("temperature must be >= 0".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(GatewayError::Config("timeout must be > 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Config("max_tokens must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(GatewayError::Config("concurrency must be positive".into()));
        }
        if let Some(rules) = &self.mock {
            for r in rules {
                if !r.pattern.starts_with("sha256:") {
                    Regex::new(&r.pattern)
                        .map_err(|e| GatewayError::Config(format!("mock pattern `{}`: {e}", r.pattern)))?;
                }
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn is_mock(&self) -> bool {
        self.mock.is_some()
    }
}

/// A deterministic, zero-latency backend answering from `script`.
pub fn mock_backend(script: impl IntoIterator<Item = (String, String)>) -> BackendConfig {
    BackendConfig {
        base_url: "mock://".into(),
        model_name: "mock".into(),
        rate_limit: 0,
        mock: Some(
            script
                .into_iter()
                .map(|(pattern, response)| MockRule { pattern, response })
                .collect(),
        ),
        ..BackendConfig::default()
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cached: bool,
    /// Transient failures retried before success.
    pub retries: u32,
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

// -- transport

#[derive(Debug, Clone, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Io(String),
}

/// Raw HTTP exchange; the gateway interprets status codes.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        request: &ChatRequest,
        api_key: Option<&str>,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError>;
}

pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post(
        &self,
        url: &str,
        request: &ChatRequest,
        api_key: Option<&str>,
        timeout: Duration,
    ) -> Result<(u16, String), TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(request).map_err(|e| TransportError::Io(e.to_string()))?;
        match req.send(body.as_str()) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| TransportError::Io(e.to_string()))?;
                Ok((status, text))
            }
            Err(ureq::Error::Timeout(_)) => Err(TransportError::Timeout),
            Err(e) => Err(TransportError::Io(e.to_string())),
        }
    }
}

// -- clock

pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Time only moves when someone sleeps. Sleeps are recorded.
#[derive(Default)]
pub struct VirtualClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl VirtualClock {
    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().1.clone()
    }
    pub fn advance(&self, d: Duration) {
        self.state.lock().unwrap().0 += d;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        self.state.lock().unwrap().0
    }
    fn sleep(&self, d: Duration) {
        let mut s = self.state.lock().unwrap();
        s.0 += d;
        s.1.push(d);
    }
}

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding 60-second window over dispatch times.
#[derive(Debug, Default)]
struct RateLimiter {
    limit: u32,
    sent: VecDeque<Duration>,
    log: Vec<Duration>,
}

impl RateLimiter {
    fn acquire(&mut self, clock: &dyn Clock) {
        if self.limit > 0 {
            loop {
                let now = clock.now();
                while self.sent.front().is_some_and(|t| now.saturating_sub(*t) >= WINDOW) {
                    self.sent.pop_front();
                }
                if (self.sent.len() as u32) < self.limit {
                    break;
                }
                let wait = WINDOW - now.saturating_sub(self.sent[0]);
                clock.sleep(wait);
            }
        }
        let now = clock.now();
        self.sent.push_back(now);
        self.log.push(now);
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

// -- cache

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model: String,
    temperature: f64,
    template_hash: String,
    text: String,
    prompt_tokens: u64,
    completion_tokens: u64,
}

struct Cache {
    path: PathBuf,
    entries: HashMap<String, CacheEntry>,
}

impl Cache {
    fn open(dir: &Path) -> Result<Self, GatewayError> {
        fs::create_dir_all(dir).map_err(|e| GatewayError::Cache(e.to_string()))?;
        let path = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| GatewayError::Cache(e.to_string()))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| GatewayError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.entry(e.key.clone()).or_insert(e);
                    }
                    Err(e) => tracing::warn!(line = i + 1, error = %e, "skipping corrupt cache line"),
                }
            }
        }
        Ok(Cache { path, entries })
    }

    fn insert(&mut self, entry: CacheEntry) -> Result<(), GatewayError> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| GatewayError::Cache(e.to_string()))?;
        let line = serde_json::to_string(&entry).map_err(|e| GatewayError::Cache(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| GatewayError::Cache(e.to_string()))?;
        self.entries.insert(entry.key.clone(), entry);
        Ok(())
    }
}

fn cache_key(template_hash: &str, model: &str, temperature: f64, prompt: &str) -> String {
    let mut h = Sha256::new();
    for part in [template_hash, model, &temperature.to_string(), prompt] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

/// Dispatch counters, mostly for tests and logs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub requests: u64,
    pub cache_hits: u64,
    pub retries: u64,
}

pub struct Gateway {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    mock: Option<Vec<(Option<Regex>, MockRule)>>,
    cache: Option<Mutex<Cache>>,
    limiter: Mutex<RateLimiter>,
    slots: Semaphore,
    stats: Mutex<GatewayStats>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("model", &self.config.model_name)
            .field("base_url", &self.config.base_url)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        Self::with_parts(config, Arc::new(HttpTransport), Arc::new(SystemClock::default()))
    }

    pub fn with_parts(
        config: BackendConfig,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        let cache = match &config.cache_dir {
            Some(dir) => Some(Mutex::new(Cache::open(dir)?)),
            None => None,
        };
        let mock = config.mock.as_ref().map(|rules| {
            rules
                .iter()
                .map(|r| {
                    let re = (!r.pattern.starts_with("sha256:")).then(|| Regex::new(&r.pattern).unwrap());
                    (re, r.clone())
                })
                .collect()
        });
        Ok(Gateway {
            limiter: Mutex::new(RateLimiter {
                limit: config.rate_limit,
                ..RateLimiter::default()
            }),
            slots: Semaphore {
                free: Mutex::new(config.concurrency),
                cv: Condvar::new(),
            },
            stats: Mutex::new(GatewayStats::default()),
            config,
            transport,
            clock,
            mock,
            cache,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats.lock().unwrap().clone()
    }

    /// Dispatch times seen by the rate limiter.
    pub fn dispatch_log(&self) -> Vec<Duration> {
        self.limiter.lock().unwrap().log.clone()
    }

    pub fn complete(&self, prompt: &PromptText) -> Result<Completion, GatewayError> {
        self.complete_text(&prompt.text, &prompt.template_hash)
    }

    pub fn complete_text(&self, prompt: &str, template_hash: &str) -> Result<Completion, GatewayError> {
        let key = cache_key(template_hash, &self.config.model_name, self.config.temperature, prompt);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().unwrap().entries.get(&key) {
                self.stats.lock().unwrap().cache_hits += 1;
                tracing::debug!(model = %self.config.model_name, "cache hit");
                return Ok(Completion {
                    text: hit.text.clone(),
                    backend: hit.model.clone(),
                    latency: Duration::ZERO,
                    prompt_tokens: hit.prompt_tokens,
                    completion_tokens: hit.completion_tokens,
                    cached: true,
                    retries: 0,
                });
            }
        }

        let completion = {
            let _slot = self.slots.acquire();
            match &self.mock {
                Some(rules) => self.answer_mock(rules, prompt)?,
                None => self.call_http(prompt)?,
            }
        };

        if let Some(cache) = &self.cache {
            cache.lock().unwrap().insert(CacheEntry {
                key,
                model: self.config.model_name.clone(),
                temperature: self.config.temperature,
                template_hash: template_hash.to_string(),
                text: completion.text.clone(),
                prompt_tokens: completion.prompt_tokens,
                completion_tokens: completion.completion_tokens,
            })?;
        }
        Ok(completion)
    }

    fn answer_mock(&self, rules: &[(Option<Regex>, MockRule)], prompt: &str) -> Result<Completion, GatewayError> {
        self.stats.lock().unwrap().requests += 1;
        let digest = sha256_hex(prompt);
        let hits: Vec<usize> = rules
            .iter()
            .enumerate()
            .filter(|(_, (re, rule))| match re {
                Some(re) => re.is_match(prompt),
                None => rule.pattern["sha256:".len()..].eq_ignore_ascii_case(&digest),
            })
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [] => Err(GatewayError::UnmatchedPrompt),
            [i] => {
                let (re, rule) = &rules[*i];
                let text = match re.as_ref().and_then(|re| re.captures(prompt)) {
                    Some(caps) => {
                        let mut out = String::new();
                        caps.expand(&rule.response, &mut out);
                        out
                    }
                    None => rule.response.clone(),
                };
                Ok(Completion {
                    backend: self.config.model_name.clone(),
                    latency: Duration::ZERO,
                    prompt_tokens: word_count(prompt),
                    completion_tokens: word_count(&text),
                    cached: false,
                    retries: 0,
                    text,
                })
            }
            _ => Err(GatewayError::AmbiguousPrompt(hits)),
        }
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        match &self.config.api_key_ref {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| GatewayError::MissingSecret(var.clone())),
        }
    }

    /// Removes the key from text that may have echoed it back.
    fn redact(&self, text: &str, key: Option<&str>) -> String {
        match key {
            Some(k) if !k.is_empty() => text.replace(k, "[REDACTED]"),
            _ => text.to_string(),
        }
    }

    fn call_http(&self, prompt: &str) -> Result<Completion, GatewayError> {
        let key = self.api_key()?;
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let request = ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };

        let mut retries = 0u32;
        loop {
            self.limiter.lock().unwrap().acquire(self.clock.as_ref());
            self.stats.lock().unwrap().requests += 1;
            let started = self.clock.now();
            let outcome = self
                .transport
                .post(&url, &request, key.as_deref(), self.config.timeout());
            let latency = self.clock.now().saturating_sub(started);

            let transient = match outcome {
                Ok((200..=299, body)) => {
                    return parse_chat_body(&body)
                        .map(|(text, pt, ct)| Completion {
                            prompt_tokens: pt.unwrap_or_else(|| word_count(prompt)),
                            completion_tokens: ct.unwrap_or_else(|| word_count(&text)),
                            text,
                            backend: self.config.model_name.clone(),
                            latency,
                            cached: false,
                            retries,
                        })
                        .map_err(|e| GatewayError::ResponseMalformed(self.redact(&e, key.as_deref())));
                }
                Ok((status @ (401 | 403), _)) => return Err(GatewayError::AuthError { status }),
                Ok((status, body)) if status == 429 || status >= 500 => format!("HTTP {status}: {}", snippet(&body)),
                Ok((status, body)) => {
                    return Err(GatewayError::RequestRejected {
                        status,
                        message: self.redact(&snippet(&body), key.as_deref()),
                    })
                }
                Err(TransportError::Timeout) => "timeout".to_string(),
                Err(TransportError::Io(e)) => e,
            };
            let last_error = self.redact(&transient, key.as_deref());
            if retries >= self.config.max_retries {
                return Err(GatewayError::BackendUnavailable {
                    attempts: retries + 1,
                    last_error,
                });
            }
            let delay = Duration::from_millis(self.config.backoff_ms.max(1).saturating_mul(1 << retries.min(20)));
            tracing::warn!(model = %self.config.model_name, attempt = retries + 1, error = %last_error, delay_ms = delay.as_millis() as u64, "transient backend failure, retrying");
            self.clock.sleep(delay);
            retries += 1;
            self.stats.lock().unwrap().retries += 1;
        }
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

fn parse_chat_body(body: &str) -> Result<(String, Option<u64>, Option<u64>), String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .ok_or_else(|| "missing choices[0].message.content".to_string())?;
    let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(|n| n.as_u64());
    Ok((text.to_string(), usage("prompt_tokens"), usage("completion_tokens")))
}

/// A chat-completion response body, for tests and local stubs.
pub fn chat_body(text: &str) -> String {
    json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 5}
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptKind;

    struct Scripted {
        replies: Mutex<VecDeque<Result<(u16, String), TransportError>>>,
        calls: Mutex<u32>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<(u16, String), TransportError>>) -> Arc<Self> {
            Arc::new(Scripted {
                replies: Mutex::new(replies.into()),
                calls: Mutex::new(0),
            })
        }
        fn calls(&self) -> u32 {
            *self.calls.lock().unwrap()
        }
    }

    impl Transport for Scripted {
        fn post(&self, _: &str, _: &ChatRequest, _: Option<&str>, _: Duration) -> Result<(u16, String), TransportError> {
            *self.calls.lock().unwrap() += 1;
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or(Ok((200, chat_body("default"))))
        }
    }

    fn prompt(text: &str) -> PromptText {
        PromptText {
            text: text.into(),
            kind: PromptKind::Inference,
            sections: vec![],
            template_hash: "t".into(),
        }
    }

    fn http_config() -> BackendConfig {
        BackendConfig {
            base_url: "http://stub".into(),
            model_name: "m".into(),
            rate_limit: 0,
            ..BackendConfig::default()
        }
    }

    #[test]
    fn mock_then_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = mock_backend([("^Task: Explain".to_string(), "R1".to_string())]);
        cfg.cache_dir = Some(dir.path().to_path_buf());
        let gw = Gateway::new(cfg.clone()).unwrap();
        let a = gw.complete(&prompt("Task: Explain this")).unwrap();
        let b = gw.complete(&prompt("Task: Explain this")).unwrap();
        assert_eq!((a.text.as_str(), a.cached), ("R1", false));
        assert_eq!((b.text.as_str(), b.cached), ("R1", true));
        assert_eq!(a.completion_tokens, b.completion_tokens);
        // persisted across instances
        let again = Gateway::new(cfg).unwrap().complete(&prompt("Task: Explain this")).unwrap();
        assert!(again.cached);
    }

    #[test]
    fn mock_routing() {
        let gw = Gateway::new(mock_backend([
            ("Task: Caption".to_string(), "C".to_string()),
            ("Task: Suggest".to_string(), "S".to_string()),
            (format!("sha256:{}", sha256_hex("exact")), "E".to_string()),
        ]))
        .unwrap();
        assert_eq!(gw.complete(&prompt("Task: Caption")).unwrap().text, "C");
        assert_eq!(gw.complete(&prompt("Task: Suggest")).unwrap().text, "S");
        assert_eq!(gw.complete(&prompt("exact")).unwrap().text, "E");
        assert_eq!(gw.complete(&prompt("other")), Err(GatewayError::UnmatchedPrompt));
        assert!(matches!(
            gw.complete(&prompt("Task: Caption Task: Suggest")),
            Err(GatewayError::AmbiguousPrompt(_))
        ));

        let gw = Gateway::new(mock_backend([(r"Dataset: (\w+)".to_string(), "about ${1}".to_string())])).unwrap();
        assert_eq!(gw.complete(&prompt("Dataset: pilot\n")).unwrap().text, "about pilot");
    }

    #[test]
    fn retries_on_429_with_growing_backoff() {
        let t = Scripted::new(vec![Ok((429, "slow".into())), Ok((429, "slow".into())), Ok((200, chat_body("ok")))]);
        let clock = Arc::new(VirtualClock::default());
        let gw = Gateway::with_parts(http_config(), t.clone(), clock.clone()).unwrap();
        let c = gw.complete(&prompt("p")).unwrap();
        assert_eq!((c.text.as_str(), c.retries), ("ok", 2));
        assert_eq!(t.calls(), 3);
        let sleeps = clock.sleeps();
        assert_eq!(sleeps.len(), 2);
        assert!(sleeps[1] > sleeps[0]);
    }

    #[test]
    fn auth_error_is_not_retried() {
        let t = Scripted::new(vec![Ok((401, "no".into()))]);
        let gw = Gateway::with_parts(http_config(), t.clone(), Arc::new(VirtualClock::default())).unwrap();
        assert_eq!(gw.complete(&prompt("p")), Err(GatewayError::AuthError { status: 401 }));
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn retries_are_bounded() {
        let t = Scripted::new(vec![Err(TransportError::Timeout); 10]);
        let clock = Arc::new(VirtualClock::default());
        let cfg = BackendConfig { max_retries: 2, ..http_config() };
        let gw = Gateway::with_parts(cfg, t.clone(), clock.clone()).unwrap();
        assert!(matches!(
            gw.complete(&prompt("p")),
            Err(GatewayError::BackendUnavailable { attempts: 3, .. })
        ));
        assert_eq!(t.calls(), 3);
        let sleeps = clock.sleeps();
        assert!(sleeps.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn malformed_body() {
        let t = Scripted::new(vec![Ok((200, "{\"nope\":1}".into()))]);
        let gw = Gateway::with_parts(http_config(), t, Arc::new(VirtualClock::default())).unwrap();
        assert!(matches!(gw.complete(&prompt("p")), Err(GatewayError::ResponseMalformed(_))));
    }

    #[test]
    fn rate_limit_holds_over_any_window() {
        let clock = Arc::new(VirtualClock::default());
        let cfg = BackendConfig { rate_limit: 5, ..http_config() };
        let gw = Gateway::with_parts(cfg, Scripted::new(vec![]), clock.clone()).unwrap();
        for i in 0..23 {
            gw.complete(&prompt(&format!("p{i}"))).unwrap();
            clock.advance(Duration::from_secs(3));
        }
        let log = gw.dispatch_log();
        assert_eq!(log.len(), 23);
        for (i, t) in log.iter().enumerate() {
            let in_window = log[i..].iter().take_while(|u| **u - *t < WINDOW).count();
            assert!(in_window <= 5, "window starting at {t:?} has {in_window}");
        }
    }

    #[test]
    fn secret_never_leaks() {
        let var = "VIZLM_TEST_GATEWAY_KEY";
        let secret = "sk-very-secret-value-123";
        std::env::set_var(var, secret);
        let dir = tempfile::tempdir().unwrap();
        let echo = format!("bad key {secret}");
        let t = Scripted::new(vec![
            Ok((400, echo.clone())),
            Ok((500, echo.clone())),
            Ok((200, chat_body("fine"))),
        ]);
        let cfg = BackendConfig {
            api_key_ref: Some(var.into()),
            cache_dir: Some(dir.path().to_path_buf()),
            max_retries: 0,
            ..http_config()
        };
        let gw = Gateway::with_parts(cfg.clone(), t, Arc::new(VirtualClock::default())).unwrap();
        let e1 = gw.complete(&prompt("a")).unwrap_err().to_string();
        let e2 = gw.complete(&prompt("b")).unwrap_err().to_string();
        gw.complete(&prompt("c")).unwrap();
        assert!(!e1.contains(secret) && !e2.contains(secret), "{e1} {e2}");
        let cache = fs::read_to_string(dir.path().join(CACHE_FILE)).unwrap();
        assert!(!cache.contains(secret));
        assert!(!format!("{gw:?} {:?}", cfg).contains(secret));

        let missing = BackendConfig {
            api_key_ref: Some("VIZLM_TEST_UNSET_KEY".into()),
            ..http_config()
        };
        let gw = Gateway::with_parts(missing, Scripted::new(vec![]), Arc::new(VirtualClock::default())).unwrap();
        assert_eq!(
            gw.complete(&prompt("a")),
            Err(GatewayError::MissingSecret("VIZLM_TEST_UNSET_KEY".into()))
        );
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig { temperature: -1.0, ..BackendConfig::default() }.validate().is_err());
        assert!(BackendConfig { timeout_secs: 0.0, ..BackendConfig::default() }.validate().is_err());
        assert_eq!(BackendConfig::default().temperature, 0.0);
    }
}
