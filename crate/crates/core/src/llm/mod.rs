//! Provider-agnostic chat completion with a persistent response cache.

mod cache;
mod gateway;
mod mock;
mod openai;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;
pub use cache::ResponseCache;
pub use gateway::{Gateway, ProviderLimits, RetryPolicy};
pub use mock::{FnProvider, MockProvider};
pub use openai::{credential_env_var, OpenAiCompatibleProvider};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: 0.0, max_output_tokens: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub provider_id: String,
    pub model_id: String,
    pub prompt_text: String,
    pub sampling: Sampling,
    pub request_key: String,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    provider_id: &'a str,
    model_id: &'a str,
    prompt_text: &'a str,
    temperature: f64,
    max_output_tokens: u32,
}

impl ChatRequest {
    pub fn new(
        provider_id: impl Into<String>,
        model_id: impl Into<String>,
        prompt_text: impl Into<String>,
        sampling: Sampling,
    ) -> Self {
        let provider_id = provider_id.into();
        let model_id = model_id.into();
        let prompt_text = prompt_text.into();
        let request_key = request_key(&provider_id, &model_id, &prompt_text, sampling);
        Self { provider_id, model_id, prompt_text, sampling, request_key }
    }
}

/// SHA-256 over the JSON encoding of every field that affects the answer.
pub fn request_key(provider_id: &str, model_id: &str, prompt_text: &str, sampling: Sampling) -> String {
    let material = KeyMaterial {
        provider_id,
        model_id,
        prompt_text,
        temperature: sampling.temperature,
        max_output_tokens: sampling.max_output_tokens,
    };
    sha256_hex(serde_json::to_string(&material).expect("key material serializes").as_bytes())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// True when the provider did not report usage and it was counted locally.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub cached: bool,
}

/// What a provider adapter hands back before the gateway adds bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: Option<Usage>,
}

impl ProviderReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderFailure {
    /// Worth retrying: rate limits, 5xx, timeouts.
    Transient(String),
    Auth(String),
    ContextLength(String),
    Fatal(String),
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("provider {provider} failed after {attempts} attempt(s): {message}")]
    ProviderError { provider: String, attempts: u32, message: String },
    #[error("provider {provider} rejected credentials: {message}")]
    AuthError { provider: String, message: String },
    #[error("prompt exceeds the context window of {model}: {message}")]
    ContextLengthExceeded { model: String, message: String },
    #[error("no provider registered as `{0}`")]
    UnknownProvider(String),
    #[error("response cache: {0}")]
    Cache(String),
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, req: &ChatRequest) -> Result<ProviderReply, ProviderFailure>;
}
