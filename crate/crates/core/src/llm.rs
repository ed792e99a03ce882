//! Blocking chat-completion client shared by the planner and persona harness.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;
use thiserror::Error;

pub const URL_ENV: &str = "MEMOR_LLM_URL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("no recorded response for {0}")]
    MissingFixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub url: String,
    pub model: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// First backoff delay; doubles on each retry.
    pub backoff: Duration,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "qwen2.5-7b-instruct".into(),
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

impl LlmConfig {
    /// Default configuration with the URL taken from `MEMOR_LLM_URL` if set.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(url) = std::env::var(URL_ENV) {
            cfg.url = url;
        }
        cfg
    }

    pub fn backoff_for(&self, retry: u32) -> Duration {
        self.backoff.saturating_mul(1u32 << retry.min(16))
    }
}

/// Something that turns a single user prompt into assistant text.
///
/// Implementations take `&mut self`: one request in flight per instance.
pub trait ChatClient {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError>;
}

/// The JSON body posted for `prompt`.
pub fn request_body(model: &str, prompt: &str) -> Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    })
}

/// Extract `choices[0].message.content` from a chat-completion response.
pub fn completion_content(response: &Value) -> Result<String, LlmError> {
    response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))
}

pub struct HttpChatClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::EndpointUnreachable(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        let body = request_body(&self.config.model, prompt);
        let resp = self.http.post(&self.config.url).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::EndpointUnreachable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Status(status.as_u16()));
        }
        let value: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::BadResponse(e.to_string())
            }
        })?;
        completion_content(&value)
    }
}

/// Returns queued replies in order; records every prompt it was given.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    pub replies: std::collections::VecDeque<Result<String, LlmError>>,
    pub prompts: Vec<String>,
}

impl ScriptedClient {
    pub fn new(replies: impl IntoIterator<Item = Result<String, LlmError>>) -> Self {
        Self {
            replies: replies.into_iter().collect(),
            prompts: Vec::new(),
        }
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        self.prompts.push(prompt.to_string());
        self.replies
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::EndpointUnreachable("script exhausted".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shape() {
        let b = request_body("m", "hello");
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["messages"][0]["content"], "hello");
        assert_eq!(b["temperature"], 0);
    }

    #[test]
    fn content_extraction() {
        let v = json!({"choices": [{"message": {"role": "assistant", "content": "{}"}}]});
        assert_eq!(completion_content(&v).unwrap(), "{}");
        assert!(completion_content(&json!({})).is_err());
    }

    #[test]
    fn backoff_doubles() {
        let c = LlmConfig {
            backoff: Duration::from_millis(10),
            ..LlmConfig::default()
        };
        assert_eq!(c.backoff_for(0), Duration::from_millis(10));
        assert_eq!(c.backoff_for(2), Duration::from_millis(40));
    }
}
