use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, ProviderFailure, ProviderReply, Usage};

/// Environment variable holding the API key for `provider_id`.
pub fn credential_env_var(provider_id: &str) -> String {
    let slug: String = provider_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("EHRRAG_{slug}_KEY")
}

/// Adapter for endpoints implementing the OpenAI chat-completions contract.
pub struct OpenAiCompatibleProvider {
    id: String,
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    usage: Option<CompletionUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct CompletionUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiCompatibleProvider {
    /// Reads the key from [`credential_env_var`]; a missing key is allowed for
    /// local endpoints that do not check it.
    pub fn from_env(id: impl Into<String>, base_url: impl Into<String>) -> Self {
        let id = id.into();
        let api_key = std::env::var(credential_env_var(&id)).ok();
        Self::new(id, base_url, api_key)
    }

    pub fn new(id: impl Into<String>, base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        Self { id: id.into(), base_url: base_url.into().trim_end_matches('/').to_string(), api_key, agent }
    }
}

impl ChatProvider for OpenAiCompatibleProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<ProviderReply, ProviderFailure> {
        let body = json!({
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.prompt_text}],
            "temperature": req.sampling.temperature,
            "max_tokens": req.sampling.max_output_tokens,
        });
        let mut call = self.agent.post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| ProviderFailure::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ProviderFailure::Transient(e.to_string()))?;
        match status {
            200..=299 => {
                let parsed: Completion =
                    serde_json::from_str(&text).map_err(|e| ProviderFailure::Fatal(format!("bad completion body: {e}")))?;
                let content = parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| ProviderFailure::Fatal("completion without content".into()))?;
                Ok(ProviderReply {
                    text: content,
                    usage: parsed.usage.map(|u| Usage {
                        input_tokens: u.prompt_tokens,
                        output_tokens: u.completion_tokens,
                        estimated: false,
                    }),
                })
            }
            401 | 403 => Err(ProviderFailure::Auth(format!("HTTP {status}"))),
            400 | 413 if is_context_length(&text) => Err(ProviderFailure::ContextLength(text)),
            408 | 409 | 429 | 500..=599 => Err(ProviderFailure::Transient(format!("HTTP {status}: {text}"))),
            _ => Err(ProviderFailure::Fatal(format!("HTTP {status}: {text}"))),
        }
    }
}

fn is_context_length(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context_length_exceeded") || b.contains("maximum context length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Sampling;
    use crate::testing::OneShotServer;

    #[test]
    fn env_var_name() {
        assert_eq!(credential_env_var("openai"), "EHRRAG_OPENAI_KEY");
        assert_eq!(credential_env_var("deep-seek"), "EHRRAG_DEEP_SEEK_KEY");
    }

    #[test]
    fn parses_completion_and_sends_contract() {
        let server = OneShotServer::start(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"- Vancomycin (01/16-present)"}}],"usage":{"prompt_tokens":12,"completion_tokens":7}}"#.into(),
        )]);
        let p = OpenAiCompatibleProvider::new("local", server.url(), Some("sk-test".into()));
        let req = ChatRequest::new("local", "gpt-x", "prompt body", Sampling::default());
        let r = p.complete(&req).unwrap();
        assert_eq!(r.text, "- Vancomycin (01/16-present)");
        assert_eq!(r.usage.unwrap().input_tokens, 12);
        let seen = server.requests();
        assert!(seen[0].head.starts_with("POST /chat/completions"));
        assert!(seen[0].head.to_ascii_lowercase().contains("authorization: bearer sk-test"));
        let sent: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
        assert_eq!(sent["model"], "gpt-x");
        assert_eq!(sent["messages"][0]["content"], "prompt body");
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn maps_status_codes() {
        let server = OneShotServer::start(vec![
            (401, "{}".into()),
            (400, r#"{"error":{"code":"context_length_exceeded"}}"#.into()),
            (429, "slow down".into()),
            (404, "nope".into()),
        ]);
        let p = OpenAiCompatibleProvider::new("local", server.url(), None);
        let req = ChatRequest::new("local", "m", "x", Sampling::default());
        assert!(matches!(p.complete(&req), Err(ProviderFailure::Auth(_))));
        assert!(matches!(p.complete(&req), Err(ProviderFailure::ContextLength(_))));
        assert!(matches!(p.complete(&req), Err(ProviderFailure::Transient(_))));
        assert!(matches!(p.complete(&req), Err(ProviderFailure::Fatal(_))));
    }
}
