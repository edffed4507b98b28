//! Prompt templates for discovered features and parsing of the JSON
//! resource lists a chat model sends back.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_URL: &str = "MOLEHILL_LLM_URL";
pub const ENV_KEY: &str = "MOLEHILL_LLM_KEY";
pub const ENV_MODEL: &str = "MOLEHILL_LLM_MODEL";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid feature context: {0}")]
    InvalidContext(String),
    #[error("no JSON array found in reply")]
    NoJsonFound,
    #[error("resource item {index}: {reason}")]
    SchemaMismatch { index: usize, reason: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("network error: {0}")]
    Network(String),
    #[error("unexpected reply: {0}")]
    InvalidReply(String),
    #[error("transport not configured: {0}")]
    NotConfigured(String),
}

impl TransportError {
    fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status(code) => *code >= 500 || *code == 429,
            TransportError::Timeout(_) | TransportError::Network(_) => true,
            TransportError::InvalidReply(_) | TransportError::NotConfigured(_) => false,
        }
    }
}

/// What the prompts say about one discovered feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureContext {
    pub symbol: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub label: String,
}

impl FeatureContext {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.symbol.trim().is_empty() {
            return Err(LlmError::InvalidContext("empty symbol".into()));
        }
        if self.label.trim().is_empty() {
            return Err(LlmError::InvalidContext("empty label".into()));
        }
        if self.start_date > self.end_date {
            return Err(LlmError::InvalidContext(format!(
                "start date {} is after end date {}",
                self.start_date, self.end_date
            )));
        }
        Ok(())
    }
}

/// English long form, e.g. "July 8, 2014".
pub fn format_date(d: NaiveDate) -> String {
    d.format("%B %-d, %Y").to_string()
}

pub fn render_feature_prompt(ctx: &FeatureContext) -> Result<String, LlmError> {
    ctx.validate()?;
    Ok(format!(
        "What happened between {} and {} that caused the stock symbol {} to {}?",
        format_date(ctx.start_date),
        format_date(ctx.end_date),
        ctx.symbol,
        ctx.label
    ))
}

pub fn render_resources_prompt(ctx: &FeatureContext) -> Result<String, LlmError> {
    ctx.validate()?;
    Ok(format!(
        "Give me a json formatted list of hyperlinked internet resources that might be related to the stock {} \
         price {} between {} and {}.  Include any public datasets, news sources, social media, and industry \
         publications that are relevant to the industry.  The JSON should for formatted as a list where each \
         item has a 'name' member and a 'url' member.",
        ctx.symbol,
        ctx.label,
        format_date(ctx.start_date),
        format_date(ctx.end_date)
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLink {
    pub name: String,
    pub url: String,
}

/// Byte ranges of balanced top-level `[...]` spans, skipping brackets
/// inside JSON strings.
fn array_spans(body: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in body.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_string = true,
            '[' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            ']' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    spans
}

/// Extracts the first top-level JSON array in `body`, ignoring any prose
/// around it, and reads it as a list of `{name, url}` objects. Arrays of
/// objects win over earlier arrays of other values such as `[1]`.
pub fn parse_resources(body: &str) -> Result<Vec<ResourceLink>, LlmError> {
    let arrays: Vec<Vec<serde_json::Value>> =
        array_spans(body).into_iter().filter_map(|(a, b)| serde_json::from_str(&body[a..b]).ok()).collect();
    let items = match arrays.iter().position(|items| items.iter().all(|v| v.is_object())) {
        Some(i) => arrays.into_iter().nth(i),
        None => arrays.into_iter().next(),
    }
    .ok_or(LlmError::NoJsonFound)?;
    items
        .into_iter()
        .enumerate()
        .map(|(index, item)| {
            let field = |key: &str| -> Result<String, LlmError> {
                match item.get(key).and_then(|v| v.as_str()).map(str::trim) {
                    Some(s) if !s.is_empty() => Ok(s.to_string()),
                    _ => Err(LlmError::SchemaMismatch { index, reason: format!("missing or empty '{key}'") }),
                }
            };
            let link = ResourceLink { name: field("name")?, url: field("url")? };
            url::Url::parse(&link.url)
                .map_err(|e| LlmError::SchemaMismatch { index, reason: format!("bad url {:?}: {e}", link.url) })?;
            Ok(link)
        })
        .collect()
}

/// Sends one prompt and returns the reply text.
pub trait Transport: Send + Sync {
    fn send(&self, prompt: &str, timeout: Duration) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryConfig {
    pub timeout: Duration,
    /// Extra attempts after the first one fails with a retryable error.
    pub retries: u32,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig { timeout: Duration::from_secs(60), retries: 2 }
    }
}

pub fn query(transport: &dyn Transport, prompt: &str, config: &QueryConfig) -> Result<String, LlmError> {
    let mut attempt = 0;
    loop {
        match transport.send(prompt, config.timeout) {
            Ok(reply) => return Ok(reply),
            Err(e) if e.is_retryable() && attempt < config.retries => attempt += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

/// Replays scripted outcomes; the last one repeats once the script runs
/// out. Latency is simulated against the caller's timeout without sleeping.
#[derive(Debug)]
pub struct MockTransport {
    script: Mutex<VecDeque<Result<String, TransportError>>>,
    latency: Duration,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn scripted(script: Vec<Result<String, TransportError>>) -> Self {
        assert!(!script.is_empty(), "mock script needs at least one outcome");
        MockTransport { script: Mutex::new(script.into()), latency: Duration::ZERO, calls: AtomicUsize::new(0) }
    }

    pub fn reply(body: impl Into<String>) -> Self {
        Self::scripted(vec![Ok(body.into())])
    }

    pub fn status(code: u16) -> Self {
        Self::scripted(vec![Err(TransportError::Status(code))])
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn send(&self, _prompt: &str, timeout: Duration) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.latency > timeout {
            return Err(TransportError::Timeout(timeout));
        }
        let mut script = self.script.lock().expect("mock script lock");
        if script.len() > 1 {
            script.pop_front().expect("non-empty script")
        } else {
            script[0].clone()
        }
    }
}

/// Chat-completions client for any OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
}

impl HttpTransport {
    pub fn from_env() -> Result<Self, TransportError> {
        let url = std::env::var(ENV_URL).map_err(|_| TransportError::NotConfigured(format!("{ENV_URL} is not set")))?;
        Ok(HttpTransport {
            url,
            key: std::env::var(ENV_KEY).ok(),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-3.5-turbo".into()),
        })
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
        })
    }
}

/// Text of the first choice in a chat-completions reply.
pub fn completion_text(reply: &serde_json::Value) -> Result<String, TransportError> {
    reply
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| TransportError::InvalidReply("no choices[0].message.content".into()))
}

impl Transport for HttpTransport {
    fn send(&self, prompt: &str, timeout: Duration) -> Result<String, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        let mut request = agent.post(&self.url);
        if let Some(key) = &self.key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request.send_json(self.request_body(prompt)).map_err(|e| match e {
            ureq::Error::StatusCode(code) => TransportError::Status(code),
            ureq::Error::Timeout(_) => TransportError::Timeout(timeout),
            other => TransportError::Network(other.to_string()),
        })?;
        let reply: serde_json::Value =
            response.body_mut().read_json().map_err(|e| TransportError::InvalidReply(e.to_string()))?;
        completion_text(&reply)
    }
}
