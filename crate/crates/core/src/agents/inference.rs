//! Chat-completion clients: an HTTP client for OpenAI-compatible endpoints
//! and a scripted stand-in for tests and demos.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use url::Url;

use crate::clock::Clock;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_TOKENS: u32 = 512;
/// Header carrying the agent handle, so stub servers can script per agent.
pub const AGENT_HEADER: &str = "X-PDS-Agent";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum InferenceError {
    #[error("inference request timed out")]
    Timeout,
    #[error("inference endpoint returned HTTP {0}")]
    Http(u16),
    #[error("inference response was malformed: {0}")]
    Malformed(String),
    #[error("inference endpoint unreachable: {0}")]
    Transport(String),
    #[error("no inference endpoint configured")]
    NotConfigured,
}

impl InferenceError {
    pub fn code(&self) -> &'static str {
        match self {
            InferenceError::Timeout => "InferenceTimeout",
            InferenceError::Http(_) => "InferenceHttpError",
            InferenceError::Malformed(_) => "InferenceMalformedResponse",
            InferenceError::Transport(_) => "InferenceTransportError",
            InferenceError::NotConfigured => "InferenceNotConfigured",
        }
    }

    /// Timeouts and server errors are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            InferenceError::Timeout => true,
            InferenceError::Http(status) => (500..600).contains(status),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceRequest {
    pub endpoint: Url,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub agent_handle: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
}

impl InferenceRequest {
    pub fn completions_url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.endpoint.as_str().trim_end_matches('/')
        )
    }

    pub fn body(&self) -> Value {
        json!({
            "model": self.model,
            "messages": self.messages,
            "max_tokens": self.max_tokens,
        })
    }
}

pub trait Inference: Send + Sync {
    fn complete(&self, request: &InferenceRequest) -> Result<String, InferenceError>;
}

/// Pulls `choices[0].message.content` out of a completion response.
pub fn extract_content(body: &Value) -> Result<String, InferenceError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| InferenceError::Malformed("missing choices[0].message.content".into()))
}

pub struct HttpInference {
    agent: ureq::Agent,
}

impl HttpInference {
    pub fn new() -> Self {
        Self::with_timeout(DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for HttpInference {
    fn default() -> Self {
        Self::new()
    }
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source = std::error::Error::source(err);
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            return matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            );
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

impl Inference for HttpInference {
    fn complete(&self, request: &InferenceRequest) -> Result<String, InferenceError> {
        let mut call = self
            .agent
            .post(&request.completions_url())
            .set(AGENT_HEADER, &request.agent_handle);
        if let Some(key) = &request.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let call = call.set("Content-Type", "application/json");
        match call.send_string(&request.body().to_string()) {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| {
                    if e.kind() == std::io::ErrorKind::TimedOut
                        || e.kind() == std::io::ErrorKind::WouldBlock
                    {
                        InferenceError::Timeout
                    } else {
                        InferenceError::Malformed(e.to_string())
                    }
                })?;
                let body: Value = serde_json::from_str(&text)
                    .map_err(|e| InferenceError::Malformed(e.to_string()))?;
                extract_content(&body)
            }
            Err(ureq::Error::Status(status, _)) => Err(InferenceError::Http(status)),
            Err(ureq::Error::Transport(t)) if is_timeout(&t) => Err(InferenceError::Timeout),
            Err(ureq::Error::Transport(t)) => Err(InferenceError::Transport(t.to_string())),
        }
    }
}

/// Canned completions. Each key holds a list of replies that is served in
/// order and then repeats. A request is matched by agent handle, then model
/// name, then the `default` key.
///
/// Special entries: `!timeout`, `!status <code>`, `!malformed`, and
/// `!hang <secs>` which advances the clock and times out past 60 s.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub default: Vec<String>,
    #[serde(default)]
    pub agents: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub models: BTreeMap<String, Vec<String>>,
}

impl Script {
    pub fn parse(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Every agent gets the same list.
    pub fn uniform(replies: &[&str]) -> Self {
        Self {
            default: replies.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn agent(mut self, handle: &str, replies: &[&str]) -> Self {
        self.agents.insert(
            handle.to_string(),
            replies.iter().map(|s| s.to_string()).collect(),
        );
        self
    }
}

/// Outcome of one scripted step, shared by the in-process stub and the HTTP stub server.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptStep {
    Reply(String),
    Fail(InferenceError),
    Hang(Duration),
}

pub struct ScriptedInference {
    script: Script,
    cursors: Mutex<HashMap<String, usize>>,
    calls: Mutex<Vec<InferenceRequest>>,
    clock: Option<Arc<dyn Clock>>,
    timeout: Duration,
}

impl ScriptedInference {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            cursors: Mutex::new(HashMap::new()),
            calls: Mutex::new(Vec::new()),
            clock: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// `!hang` entries advance this clock.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    /// Every request received so far.
    pub fn calls(&self) -> Vec<InferenceRequest> {
        self.calls.lock().clone()
    }

    /// Picks the next step for an agent/model pair, advancing its cursor.
    pub fn next_step(&self, agent: &str, model: &str) -> ScriptStep {
        let (key, list) = if let Some(list) = self.script.agents.get(agent) {
            (format!("agent:{agent}"), list)
        } else if let Some(list) = self.script.models.get(model) {
            (format!("model:{model}"), list)
        } else {
            ("default".to_string(), &self.script.default)
        };
        if list.is_empty() {
            return ScriptStep::Reply("DECISION: none".into());
        }
        let mut cursors = self.cursors.lock();
        let cursor = cursors.entry(key).or_insert(0);
        let entry = list[*cursor % list.len()].clone();
        *cursor += 1;
        parse_step(&entry)
    }
}

pub fn parse_step(entry: &str) -> ScriptStep {
    let trimmed = entry.trim();
    if trimmed == "!timeout" {
        return ScriptStep::Fail(InferenceError::Timeout);
    }
    if trimmed == "!malformed" {
        return ScriptStep::Fail(InferenceError::Malformed("scripted".into()));
    }
    if let Some(code) = trimmed.strip_prefix("!status ") {
        if let Ok(code) = code.trim().parse() {
            return ScriptStep::Fail(InferenceError::Http(code));
        }
    }
    if let Some(secs) = trimmed.strip_prefix("!hang ") {
        if let Ok(secs) = secs.trim().parse() {
            return ScriptStep::Hang(Duration::from_secs(secs));
        }
    }
    ScriptStep::Reply(entry.to_string())
}

impl Inference for ScriptedInference {
    fn complete(&self, request: &InferenceRequest) -> Result<String, InferenceError> {
        self.calls.lock().push(request.clone());
        match self.next_step(&request.agent_handle, &request.model) {
            ScriptStep::Reply(text) => Ok(text),
            ScriptStep::Fail(e) => Err(e),
            ScriptStep::Hang(d) => {
                if let Some(clock) = &self.clock {
                    clock.sleep(d.min(self.timeout));
                }
                if d > self.timeout {
                    Err(InferenceError::Timeout)
                } else {
                    Ok("DECISION: none".into())
                }
            }
        }
    }
}
