//! Chat-completion access for the LLM-guided chunkers.
//!
//! Every request runs at temperature 0.0. [`LlmGateway`] adds an on-disk
//! response cache and a bound on in-flight requests in front of any
//! [`LanguageModel`].

mod cache;
mod http;
mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sync::Semaphore;

pub use cache::ResponseCache;
pub use http::{ChatEndpoint, HttpChatModel};
pub use stub::StubLlm;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("LLM configuration error: {0}")]
    Config(String),
    #[error("LLM cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_name: String,
    /// Retry ordinal after an unparseable answer. Non-zero attempts get
    /// their own cache entry so a bad cached answer is not replayed.
    #[serde(default)]
    pub attempt: u32,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: 2048,
            model_name: model_name.into(),
            attempt: 0,
        }
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    pub(crate) fn validate(&self) -> Result<(), LlmError> {
        if self.temperature != 0.0 {
            return Err(LlmError::Config(format!("temperature must be 0.0, got {}", self.temperature)));
        }
        Ok(())
    }
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError>;

    fn model_name(&self) -> String;
}

/// Cache + concurrency bound around a backend.
pub struct LlmGateway {
    backend: Box<dyn LanguageModel>,
    cache: Option<ResponseCache>,
    in_flight: Semaphore,
}

impl LlmGateway {
    pub const DEFAULT_IN_FLIGHT: usize = 4;

    pub fn new(backend: Box<dyn LanguageModel>, cache: Option<ResponseCache>, max_in_flight: usize) -> Self {
        LlmGateway { backend, cache, in_flight: Semaphore::new(max_in_flight) }
    }

    pub fn stub() -> Self {
        Self::new(Box::new(StubLlm), None, Self::DEFAULT_IN_FLIGHT)
    }
}

impl LanguageModel for LlmGateway {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        req.validate()?;
        if let Some(hit) = self.cache.as_ref().map(|c| c.get(req)).transpose()?.flatten() {
            return Ok(hit);
        }
        let response = {
            let _permit = self.in_flight.acquire();
            self.backend.complete(req)?
        };
        if let Some(cache) = &self.cache {
            cache.put(req, &response)?;
        }
        Ok(response)
    }

    fn model_name(&self) -> String {
        self.backend.model_name()
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }

    fn model_name(&self) -> String {
        (**self).model_name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting(Arc<AtomicUsize>);

    impl LanguageModel for Counting {
        fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{}#{n}", req.prompt.len()))
        }
        fn model_name(&self) -> String {
            "counting".into()
        }
    }

    #[test]
    fn cache_hit_is_identical_and_free() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let gw = LlmGateway::new(Box::new(Counting(calls.clone())), Some(ResponseCache::new(dir.path()).unwrap()), 4);
        let req = LlmRequest::new("hello", "m");
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);

        // a fresh gateway over the same directory still hits
        let gw2 = LlmGateway::new(Box::new(Counting(calls.clone())), Some(ResponseCache::new(dir.path()).unwrap()), 4);
        assert_eq!(gw2.complete(&req).unwrap(), first);
        assert_eq!(calls.load(Ordering::SeqCst), 1);

        // retry attempts are keyed separately
        gw.complete(&req.clone().with_attempt(1)).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn nonzero_temperature_is_rejected() {
        let mut req = LlmRequest::new("x", "m");
        req.temperature = 0.7;
        assert!(matches!(LlmGateway::stub().complete(&req), Err(LlmError::Config(_))));
    }

    #[test]
    fn in_flight_is_bounded() {
        use std::time::Duration;
        struct Slow(Arc<AtomicUsize>, Arc<AtomicUsize>);
        impl LanguageModel for Slow {
            fn complete(&self, _: &LlmRequest) -> Result<String, LlmError> {
                let now = self.0.fetch_add(1, Ordering::SeqCst) + 1;
                self.1.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                self.0.fetch_sub(1, Ordering::SeqCst);
                Ok(String::new())
            }
            fn model_name(&self) -> String {
                "slow".into()
            }
        }
        let cur = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let gw = Arc::new(LlmGateway::new(Box::new(Slow(cur, peak.clone())), None, 2));
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let gw = gw.clone();
                std::thread::spawn(move || gw.complete(&LlmRequest::new(format!("p{i}"), "m")).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
