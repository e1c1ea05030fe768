use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{LanguageModel, LlmError, LlmRequest};

#[derive(Debug, Clone)]
pub struct ChatEndpoint {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl ChatEndpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        ChatEndpoint {
            url: url.into(),
            model: model.into(),
            api_key_env: None,
            max_retries: 2,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

/// Minimal chat-completion client: POST `{model, messages, temperature}`.
pub struct HttpChatModel {
    endpoint: ChatEndpoint,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatModel {
    pub fn new(endpoint: ChatEndpoint) -> Result<Self, LlmError> {
        let api_key = match &endpoint.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpChatModel { endpoint, api_key, http })
    }

    fn send_once(&self, req: &LlmRequest) -> Result<String, Attempt> {
        let body = json!({
            "model": req.model_name,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let mut rb = self.http.post(&self.endpoint.url).json(&body);
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        // 429 is rate limiting: retried like a transport failure.
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if status.is_client_error() {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(LlmError::Config(format!("HTTP {status}: {text}"))));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| Attempt::Retry(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Attempt::Retry("response has no choices".into()))
    }
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl LanguageModel for HttpChatModel {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        req.validate()?;
        let mut last = String::new();
        for attempt in 0..=self.endpoint.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.endpoint.backoff * 2u32.pow(attempt - 1));
            }
            match self.send_once(req) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(LlmError::Transport { attempts: self.endpoint.max_retries + 1, message: last })
    }

    fn model_name(&self) -> String {
        self.endpoint.model.clone()
    }
}
