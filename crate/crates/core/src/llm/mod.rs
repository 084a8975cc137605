//! Chat-completion clients and extraction of test functions from replies.

mod extract;
mod http;
mod replay;
mod scripted;

pub use extract::{extract_tests, Extraction, GeneratedTest};
pub use http::HttpClient;
pub use replay::{Exchange, Outcome, Recorder, ReplayClient};
pub use scripted::{BrokenClient, OracleClient, SequenceClient};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sent as the system message of every request.
pub const SYSTEM_MESSAGE: &str = "You write unit tests for MiniLang programs. \
Reply with MiniLang test functions inside a single fenced code block. \
Each test is a top-level `func test_<name>()` with no parameters that checks results with `assert`.";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("context budget exceeded: {0}")]
    Budget(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Full chat-completions URL.
    pub endpoint_url: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    /// First retry delay; doubled per retry.
    pub backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            max_tokens: 4096,
            temperature: 0.2,
            api_key_env: "PANTA_API_KEY".into(),
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        if self.timeout_secs == 0 {
            return Err("timeout_secs must be positive".into());
        }
        Ok(())
    }
}

/// Anything that turns a prompt into a reply.
pub trait LlmClient: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).generate(prompt)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).generate(prompt)
    }
}
