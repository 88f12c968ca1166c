use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{ChatProvider, ChatRequest, LlmError, ProviderFailure, ProviderReply};
use crate::hashing::sha256_hex;

/// Key in a script file whose value answers every unscripted request.
pub const DEFAULT_KEY: &str = "*";

/// Offline provider answering from a script of `key -> response text`.
///
/// A key may be the request key or the SHA-256 of the prompt text.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    id: String,
    script: HashMap<String, String>,
}

impl MockProvider {
    pub fn new(id: impl Into<String>, script: HashMap<String, String>) -> Self {
        Self { id: id.into(), script }
    }

    /// Reads a JSON object mapping keys to response texts.
    pub fn from_file(id: impl Into<String>, path: &Path) -> Result<Self, LlmError> {
        let raw = fs::read_to_string(path).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&raw).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        Ok(Self::new(id, script))
    }

    pub fn prompt_hash(prompt: &str) -> String {
        sha256_hex(prompt.as_bytes())
    }

    pub fn insert(&mut self, key: impl Into<String>, text: impl Into<String>) {
        self.script.insert(key.into(), text.into());
    }
}

impl ChatProvider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<ProviderReply, ProviderFailure> {
        self.script
            .get(&req.request_key)
            .or_else(|| self.script.get(&Self::prompt_hash(&req.prompt_text)))
            .or_else(|| self.script.get(DEFAULT_KEY))
            .map(ProviderReply::text)
            .ok_or_else(|| ProviderFailure::Fatal(format!("no scripted response for {}", req.request_key)))
    }
}

type Handler = dyn Fn(&ChatRequest) -> Result<ProviderReply, ProviderFailure> + Send + Sync;

/// Provider backed by a closure.
pub struct FnProvider {
    id: String,
    f: Box<Handler>,
}

impl FnProvider {
    pub fn new(
        id: impl Into<String>,
        f: impl Fn(&ChatRequest) -> Result<ProviderReply, ProviderFailure> + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.into(), f: Box::new(f) }
    }
}

impl ChatProvider for FnProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<ProviderReply, ProviderFailure> {
        (self.f)(req)
    }
}
