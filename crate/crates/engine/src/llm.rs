//! LLM transports: an OpenAI-compatible HTTP client and a fixture-backed mock.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const API_KEY_ENV: &str = "TRAJEDIT_API_KEY";
pub const BASE_URL_ENV: &str = "TRAJEDIT_BASE_URL";
/// Consulted when the variables above are unset.
const FALLBACK_API_KEY_ENV: &str = "OPENAI_API_KEY";
const FALLBACK_BASE_URL_ENV: &str = "OPENAI_BASE_URL";

pub const FIXTURE_SUFFIX: &str = ".resp.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Live,
    Mock,
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(TransportKind::Live),
            "mock" => Ok(TransportKind::Mock),
            other => Err(format!(
                "unknown transport '{other}' (expected mock or live)"
            )),
        }
    }
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportKind::Live => "live",
            TransportKind::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub transport: TransportKind,
    /// Base URL; `/chat/completions` is appended. Empty means the env var or
    /// the OpenAI default.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            transport: TransportKind::Mock,
            endpoint: String::new(),
            model: "gpt-4o".into(),
            temperature: 0.1,
            timeout_secs: 60.0,
            max_retries: 2,
        }
    }
}

impl LlmConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature must be in [0, 2], got {}",
                self.temperature
            )));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(LlmError::Config(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::Config("model name is empty".into()));
        }
        Ok(())
    }
}

/// Identifies which canned response a mock call should return.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub sample_id: String,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("no fixture for {key}")]
    FixtureMiss { key: String },
    #[error("configuration error: {0}")]
    Config(String),
}

pub trait Transport: Send + Sync {
    fn complete(&self, prompt: &str, ctx: &RequestContext) -> Result<String, LlmError>;
}

/// Canned responses keyed by (sample id, iteration).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureStore {
    entries: BTreeMap<(String, usize), String>,
}

pub fn fixture_file_name(sample_id: &str, iteration: usize) -> String {
    format!("{sample_id}.{iteration}{FIXTURE_SUFFIX}")
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `<id>.<iter>.resp.txt` in `dir`; other files are ignored.
    pub fn load(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut store = Self::new();
        for entry in std::fs::read_dir(dir.as_ref())? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(stem) = name.strip_suffix(FIXTURE_SUFFIX) else {
                continue;
            };
            let Some((id, iter)) = stem.rsplit_once('.') else {
                continue;
            };
            let Ok(iter) = iter.parse::<usize>() else {
                continue;
            };
            store.insert(id, iter, std::fs::read_to_string(&path)?);
        }
        Ok(store)
    }

    pub fn insert(&mut self, sample_id: &str, iteration: usize, text: impl Into<String>) {
        self.entries
            .insert((sample_id.to_string(), iteration), text.into());
    }

    pub fn get(&self, sample_id: &str, iteration: usize) -> Option<&str> {
        self.entries
            .get(&(sample_id.to_string(), iteration))
            .map(String::as_str)
    }

    pub fn contains_sample(&self, sample_id: &str) -> bool {
        self.get(sample_id, 0).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, &str)> {
        self.entries
            .iter()
            .map(|((id, it), text)| (id.as_str(), *it, text.as_str()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockTransport {
    store: Arc<FixtureStore>,
}

impl MockTransport {
    pub fn new(store: FixtureStore) -> Self {
        Self {
            store: Arc::new(store),
        }
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }
}

impl Transport for MockTransport {
    fn complete(&self, _prompt: &str, ctx: &RequestContext) -> Result<String, LlmError> {
        self.store
            .get(&ctx.sample_id, ctx.iteration)
            .map(str::to_string)
            .ok_or_else(|| LlmError::FixtureMiss {
                key: fixture_file_name(&ctx.sample_id, ctx.iteration),
            })
    }
}

pub struct LiveTransport {
    url: String,
    api_key: Option<String>,
    model: String,
    temperature: f64,
    max_retries: u32,
    agent: ureq::Agent,
}

fn env_nonempty(names: &[&str]) -> Option<String> {
    names
        .iter()
        .find_map(|n| std::env::var(n).ok().filter(|v| !v.trim().is_empty()))
}

impl LiveTransport {
    pub fn new(cfg: &LlmConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let base = if cfg.endpoint.trim().is_empty() {
            env_nonempty(&[BASE_URL_ENV, FALLBACK_BASE_URL_ENV])
                .unwrap_or_else(|| "https://api.openai.com/v1".into())
        } else {
            cfg.endpoint.clone()
        };
        let timeout = Duration::from_secs_f64(cfg.timeout_secs);
        Ok(Self {
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            api_key: env_nonempty(&[API_KEY_ENV, FALLBACK_API_KEY_ENV]),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            max_retries: cfg.max_retries,
            agent: ureq::AgentBuilder::new()
                .timeout_connect(timeout)
                .timeout(timeout)
                .build(),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, prompt: &str) -> Result<String, String> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                return Err(format!("HTTP {code}: {}", detail.trim()));
            }
            Err(e) => return Err(e.to_string()),
        };
        let payload: Value = resp
            .into_json()
            .map_err(|e| format!("malformed response body: {e}"))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl Transport for LiveTransport {
    fn complete(&self, prompt: &str, _ctx: &RequestContext) -> Result<String, LlmError> {
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                thread::sleep(Duration::from_millis(250 << i.min(4)));
            }
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(LlmError::Transport {
            message: last,
            attempts,
        })
    }
}

/// Builds the transport named by `cfg`; mock mode reads `fixtures_dir`.
pub fn transport_for(
    cfg: &LlmConfig,
    fixtures_dir: Option<&PathBuf>,
) -> Result<Arc<dyn Transport>, LlmError> {
    cfg.validate()?;
    match cfg.transport {
        TransportKind::Live => Ok(Arc::new(LiveTransport::new(cfg)?)),
        TransportKind::Mock => {
            let store = match fixtures_dir {
                Some(dir) => FixtureStore::load(dir).map_err(|e| {
                    LlmError::Config(format!("cannot read fixtures in {}: {e}", dir.display()))
                })?,
                None => FixtureStore::new(),
            };
            Ok(Arc::new(MockTransport::new(store)))
        }
    }
}
