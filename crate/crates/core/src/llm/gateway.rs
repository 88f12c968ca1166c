use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError, ProviderFailure, ResponseCache, Usage};
use crate::indexer::{RuleTokenizer, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_retries: 0, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProviderLimits {
    pub max_concurrent: usize,
    pub min_interval: Duration,
}

impl Default for ProviderLimits {
    fn default() -> Self {
        Self { max_concurrent: 8, min_interval: Duration::ZERO }
    }
}

struct Limiter {
    limits: ProviderLimits,
    state: Mutex<(usize, Option<Instant>)>,
    freed: Condvar,
}

impl Limiter {
    fn new(limits: ProviderLimits) -> Self {
        Self { limits, state: Mutex::new((0, None)), freed: Condvar::new() }
    }

    fn acquire(&self) {
        let mut st = self.state.lock().expect("limiter lock");
        while st.0 >= self.limits.max_concurrent.max(1) {
            st = self.freed.wait(st).expect("limiter lock");
        }
        st.0 += 1;
        if let Some(last) = st.1 {
            let ready = last + self.limits.min_interval;
            let now = Instant::now();
            if ready > now {
                st.1 = Some(ready);
                drop(st);
                thread::sleep(ready - now);
                return;
            }
        }
        st.1 = Some(Instant::now());
    }

    fn release(&self) {
        let mut st = self.state.lock().expect("limiter lock");
        st.0 -= 1;
        self.freed.notify_one();
    }
}

struct Registered {
    provider: Arc<dyn ChatProvider>,
    limiter: Limiter,
}

/// Routes requests to providers, answering from the cache when possible.
pub struct Gateway {
    providers: HashMap<String, Registered>,
    context_windows: HashMap<(String, String), usize>,
    cache: ResponseCache,
    retry: RetryPolicy,
    tokenizer: Box<dyn Tokenizer>,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(cache: ResponseCache) -> Self {
        Self {
            providers: HashMap::new(),
            context_windows: HashMap::new(),
            cache,
            retry: RetryPolicy::default(),
            tokenizer: Box::new(RuleTokenizer),
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_tokenizer(mut self, tokenizer: Box<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn register(&mut self, provider: Arc<dyn ChatProvider>, limits: ProviderLimits) {
        let id = provider.id().to_string();
        self.providers.insert(id, Registered { provider, limiter: Limiter::new(limits) });
    }

    /// Prompts longer than `tokens` (local count) are refused without a call.
    pub fn set_context_window(&mut self, provider_id: &str, model_id: &str, tokens: usize) {
        self.context_windows.insert((provider_id.to_string(), model_id.to_string()), tokens);
    }

    pub fn has_provider(&self, id: &str) -> bool {
        self.providers.contains_key(id)
    }

    /// Number of requests that reached a provider (cache hits excluded).
    pub fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if let Some((text, usage)) = self.cache.get(&req.request_key) {
            return Ok(ChatResponse { text, usage, latency_ms: 0, cached: true });
        }
        let reg = self
            .providers
            .get(&req.provider_id)
            .ok_or_else(|| LlmError::UnknownProvider(req.provider_id.clone()))?;
        let prompt_tokens = self.tokenizer.count_tokens(&req.prompt_text);
        if let Some(&window) = self.context_windows.get(&(req.provider_id.clone(), req.model_id.clone())) {
            if prompt_tokens > window {
                return Err(LlmError::ContextLengthExceeded {
                    model: req.model_id.clone(),
                    message: format!("{prompt_tokens} prompt tokens > window {window}"),
                });
            }
        }

        let started = Instant::now();
        let mut attempt = 0u32;
        let reply = loop {
            reg.limiter.acquire();
            self.calls.fetch_add(1, Ordering::SeqCst);
            let outcome = reg.provider.complete(req);
            reg.limiter.release();
            match outcome {
                Ok(r) => break r,
                Err(ProviderFailure::Transient(msg)) if attempt < self.retry.max_retries => {
                    log::warn!("{}: transient failure ({msg}), retry {}", req.provider_id, attempt + 1);
                    thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(ProviderFailure::Transient(message)) | Err(ProviderFailure::Fatal(message)) => {
                    return Err(LlmError::ProviderError {
                        provider: req.provider_id.clone(),
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(ProviderFailure::Auth(message)) => {
                    return Err(LlmError::AuthError { provider: req.provider_id.clone(), message })
                }
                Err(ProviderFailure::ContextLength(message)) => {
                    return Err(LlmError::ContextLengthExceeded { model: req.model_id.clone(), message })
                }
            }
        };
        let usage = reply.usage.unwrap_or_else(|| Usage {
            input_tokens: prompt_tokens as u64,
            output_tokens: self.tokenizer.count_tokens(&reply.text) as u64,
            estimated: true,
        });
        self.cache.put(&req.request_key, &reply.text, usage)?;
        Ok(ChatResponse {
            text: reply.text,
            usage,
            latency_ms: started.elapsed().as_millis() as u64,
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnProvider, ProviderReply, Sampling};
    use std::sync::atomic::AtomicU32;

    fn req(provider: &str, prompt: &str) -> ChatRequest {
        ChatRequest::new(provider, "m", prompt, Sampling::default())
    }

    #[test]
    fn second_identical_request_is_cached() {
        let mut g = Gateway::new(ResponseCache::in_memory());
        g.register(Arc::new(FnProvider::new("p", |r| Ok(ProviderReply::text(r.prompt_text.to_uppercase())))), ProviderLimits::default());
        let a = g.complete(&req("p", "hi")).unwrap();
        let b = g.complete(&req("p", "hi")).unwrap();
        assert!(!a.cached && b.cached);
        assert_eq!(a.text, b.text);
        assert_eq!(g.provider_calls(), 1);
    }

    #[test]
    fn transient_failures_are_retried() {
        let n = Arc::new(AtomicU32::new(0));
        let n2 = n.clone();
        let mut g = Gateway::new(ResponseCache::in_memory()).with_retry(RetryPolicy {
            max_retries: 3,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        });
        g.register(
            Arc::new(FnProvider::new("flaky", move |_| {
                if n2.fetch_add(1, Ordering::SeqCst) < 2 {
                    Err(ProviderFailure::Transient("503".into()))
                } else {
                    Ok(ProviderReply::text("ok"))
                }
            })),
            ProviderLimits::default(),
        );
        assert_eq!(g.complete(&req("flaky", "x")).unwrap().text, "ok");
        assert_eq!(n.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_exhaust_into_provider_error() {
        let mut g = Gateway::new(ResponseCache::in_memory()).with_retry(RetryPolicy {
            max_retries: 2,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        });
        g.register(Arc::new(FnProvider::new("down", |_| Err(ProviderFailure::Transient("503".into())))), ProviderLimits::default());
        let err = g.complete(&req("down", "x")).unwrap_err();
        assert!(matches!(err, LlmError::ProviderError { attempts: 3, .. }));
        assert!(g.cache().is_empty());
    }

    #[test]
    fn context_window_is_enforced_locally() {
        let mut g = Gateway::new(ResponseCache::in_memory());
        g.register(Arc::new(FnProvider::new("p", |_| Ok(ProviderReply::text("x")))), ProviderLimits::default());
        g.set_context_window("p", "m", 3);
        let err = g.complete(&req("p", "one two three four")).unwrap_err();
        assert!(matches!(err, LlmError::ContextLengthExceeded { .. }));
        assert_eq!(g.provider_calls(), 0);
        assert!(g.complete(&req("p", "one two three")).is_ok());
    }

    #[test]
    fn auth_and_unknown_provider() {
        let mut g = Gateway::new(ResponseCache::in_memory());
        g.register(Arc::new(FnProvider::new("p", |_| Err(ProviderFailure::Auth("401".into())))), ProviderLimits::default());
        assert!(matches!(g.complete(&req("p", "x")), Err(LlmError::AuthError { .. })));
        assert!(matches!(g.complete(&req("q", "x")), Err(LlmError::UnknownProvider(_))));
    }

    #[test]
    fn concurrency_limit_holds() {
        let live = Arc::new(AtomicU32::new(0));
        let peak = Arc::new(AtomicU32::new(0));
        let (l2, p2) = (live.clone(), peak.clone());
        let mut g = Gateway::new(ResponseCache::in_memory());
        g.register(
            Arc::new(FnProvider::new("p", move |r| {
                let now = l2.fetch_add(1, Ordering::SeqCst) + 1;
                p2.fetch_max(now, Ordering::SeqCst);
                thread::sleep(Duration::from_millis(5));
                l2.fetch_sub(1, Ordering::SeqCst);
                Ok(ProviderReply::text(r.prompt_text.clone()))
            })),
            ProviderLimits { max_concurrent: 2, min_interval: Duration::ZERO },
        );
        let g = Arc::new(g);
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let g = g.clone();
                thread::spawn(move || g.complete(&req("p", &format!("q{i}"))).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(g.provider_calls(), 8);
    }
}
