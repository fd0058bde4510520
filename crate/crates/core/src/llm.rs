//! Agent completions: an OpenAI-compatible chat-completions client with
//! retries, and a scripted agent for deterministic runs.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::retrieval::{SummaryError, Summarizer};
use crate::snippet::SnippetDocument;

pub const API_KEY_ENV: &str = "CODENAV_API_KEY";
pub const API_BASE_ENV: &str = "CODENAV_API_BASE";

/// What a scripted agent says once its script is used up.
pub const CANONICAL_DONE: &str = "<thought>Nothing left to do.</thought>\n<type>done</type>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, initial_backoff_ms: 1000, max_backoff_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, failed_attempts: u32) -> Duration {
        let factor = 1u64.checked_shl(failed_attempts.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_seconds: u64,
    pub retry: RetryPolicy,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_tokens: 2048,
            timeout_seconds: 120,
            retry: RetryPolicy::default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err("temperature must be >= 0".into());
        }
        if self.retry.max_attempts < 1 {
            return Err("retry.max_attempts must be >= 1".into());
        }
        if self.model.trim().is_empty() {
            return Err("model name is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("LLM endpoint returned an unusable body: {0}")]
    Protocol(String),
    #[error("LLM client misconfigured: {0}")]
    Config(String),
}

/// Client for a chat-completions endpoint (`{base}/chat/completions`).
#[derive(Debug, Clone)]
pub struct ChatClient {
    base_url: String,
    api_key: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(LlmError),
}

impl ChatClient {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        ChatClient { base_url: base_url.into().trim_end_matches('/').to_string(), api_key }
    }

    /// Configure from `CODENAV_API_BASE` and `CODENAV_API_KEY`.
    pub fn from_env() -> Result<Self, LlmError> {
        let base = std::env::var(API_BASE_ENV)
            .map_err(|_| LlmError::Config(format!("{API_BASE_ENV} is not set")))?;
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(ChatClient::new(base, key))
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    pub fn request_body(messages: &[ChatMessage], params: &ModelParams) -> Value {
        json!({
            "model": params.model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        })
    }

    /// Send one completion request, retrying on transport failures, 429 and 5xx.
    pub fn complete(&self, messages: &[ChatMessage], params: &ModelParams) -> Result<String, LlmError> {
        params.validate().map_err(LlmError::Config)?;
        let body = Self::request_body(messages, params).to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(params.timeout_seconds.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        log::debug!("POST {} {}", self.endpoint(), body);
        let mut last = String::new();
        for attempt in 1..=params.retry.max_attempts {
            if attempt > 1 {
                thread::sleep(params.retry.backoff(attempt - 1));
            }
            match self.attempt(&agent, &body, attempt) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("LLM attempt {attempt} failed: {msg}");
                    last = msg;
                }
            }
        }
        Err(LlmError::Transport { attempts: params.retry.max_attempts, message: last })
    }

    fn attempt(&self, agent: &ureq::Agent, body: &str, attempt: u32) -> Attempt {
        let mut req = agent.post(&self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        log::debug!("HTTP {status} {text}");
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}: {}", snippet(&text)));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(LlmError::Transport {
                attempts: attempt,
                message: format!("HTTP {status}: {}", snippet(&text)),
            });
        }
        match parse_completion(&text) {
            Ok(t) => Attempt::Done(t),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(300).collect()
}

fn parse_completion(text: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| LlmError::Protocol(format!("not JSON ({e}): {}", snippet(text))))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Protocol(format!("missing choices[0].message.content: {}", snippet(text))))
}

/// Something that produces the agent's raw output for a step.
pub trait Agent: Send {
    /// `step` is 1-based.
    fn next_output(&mut self, step: usize, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

/// Replays a fixed list of outputs, then says done forever.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAgent {
    pub script: Vec<String>,
}

impl ScriptedAgent {
    pub fn new(script: Vec<String>) -> Self {
        ScriptedAgent { script }
    }
}

pub fn scripted_next_action(script: &[String], step_index: usize) -> String {
    step_index
        .checked_sub(1)
        .and_then(|i| script.get(i))
        .cloned()
        .unwrap_or_else(|| CANONICAL_DONE.to_string())
}

impl Agent for ScriptedAgent {
    fn next_output(&mut self, step: usize, _messages: &[ChatMessage]) -> Result<String, LlmError> {
        Ok(scripted_next_action(&self.script, step))
    }
}

/// Agent backed by a chat-completions endpoint.
pub struct LlmAgent {
    pub client: ChatClient,
    pub params: ModelParams,
}

impl Agent for LlmAgent {
    fn next_output(&mut self, _step: usize, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self.client.complete(messages, &self.params)
    }
}

/// Asks the model for a short docstring-style description of a definition.
pub struct LlmSummarizer {
    pub client: ChatClient,
    pub params: ModelParams,
}

impl Summarizer for LlmSummarizer {
    fn id(&self) -> &str {
        "llm-docstring/1"
    }

    fn summarize(&self, doc: &SnippetDocument) -> Result<String, SummaryError> {
        let messages = [
            ChatMessage::system(
                "Write a concise docstring for the given Python definition. Reply with the docstring text only.",
            ),
            ChatMessage::user(doc.text.clone()),
        ];
        let text = self
            .client
            .complete(&messages, &self.params)
            .map_err(|e| SummaryError::Failed(e.to_string()))?;
        let body: Vec<String> = text.trim().lines().map(|l| format!("    {l}").trim_end().to_string()).collect();
        Ok(format!("{}\n    \"\"\"\n{}\n    \"\"\"", doc.prototype, body.join("\n")))
    }
}
