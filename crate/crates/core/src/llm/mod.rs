//! Model client layer: prompt construction, a chat-completion HTTP client,
//! deterministic mock clients, and response parsing. The fuzzing loop only
//! sees the [`ModelClient`] trait, so every test and the offline smoke run
//! work without a network.

mod http;
mod mock;
mod parse;
mod prompts;

pub use http::HttpModelClient;
pub use mock::{FillerClient, MockScript, ScriptEntry, ScriptResponse, ScriptedClient};
pub use parse::parse_sql_array;
pub use prompts::{
    build_instantiation_prompt, build_instantiation_prompt_bounded, build_repair_prompt,
    RepairAnnotation,
};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Completion endpoint parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub temperature: f64,
    pub max_context_tokens: usize,
    pub endpoint: String,
    pub model_name: String,
    #[serde(with = "duration_millis")]
    pub request_timeout: Duration,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            temperature: 0.4,
            max_context_tokens: 8192,
            endpoint: String::new(),
            model_name: String::new(),
            request_timeout: Duration::from_secs(30),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::InvalidParams("temperature must be in [0, 2]".into()));
        }
        if self.max_context_tokens == 0 {
            return Err(ClientError::InvalidParams("max_context_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Character budget derived from the token window (heuristic 4 chars per
    /// token); used when truncating oversized prompt context.
    pub fn context_char_budget(&self) -> usize {
        self.max_context_tokens.saturating_mul(4)
    }
}

mod duration_millis {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Instantiation,
    Repair,
}

/// A fully interpolated prompt plus the structured pieces it was built from
/// (the rule-based mock consumes the structure, the HTTP client the text).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub kind: PromptKind,
    pub text: String,
    pub target_dialect: String,
    pub payload: PromptPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptPayload {
    Instantiation {
        schema_block: String,
        templates: Vec<String>,
    },
    Repair {
        /// Every statement of the case, in order.
        statements: Vec<String>,
        /// Index/message/suggestion for each marked statement.
        marked: Vec<RepairAnnotation>,
    },
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no templates to instantiate")]
    EmptyTemplates,
    #[error("error record index {index} out of range for a {len}-statement case")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no errors to repair")]
    EmptyErrors,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Endpoint(u16),
    #[error("mock script has no entry matching the prompt: {0}")]
    NoScript(String),
    #[error("invalid model params: {0}")]
    InvalidParams(String),
    #[error("malformed completion payload: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Error)]
#[error("no JSON array of SQL statements in the response")]
pub struct NoJsonArray;

/// A chat-completion backend. Implementations must be shareable across the
/// prefetch threads.
pub trait ModelClient: Send + Sync {
    fn complete(&self, prompt: &Prompt, params: &ModelParams) -> Result<String, ClientError>;

    /// Cheap liveness probe; the mock clients are always healthy.
    fn health_probe(&self, _params: &ModelParams) -> Result<(), ClientError> {
        Ok(())
    }
}
