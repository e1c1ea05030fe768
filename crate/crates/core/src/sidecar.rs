//! HTTP client for the embedding sidecar.
//!
//! ```text
//! POST /v1/token_embeddings {model, text}               -> {model, tokens, offsets, vectors, dims}
//! POST /v1/embeddings       {model, texts, input_type?} -> {vectors, errors?}
//! GET  /v1/models                                       -> {models: [{name, window, dims}]}
//! ```
//!
//! Offsets are byte offsets into the request text; special tokens are
//! never returned.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::span::Span;
use crate::sync::Semaphore;
use crate::tokenizer::{TokenMap, TokenizeError, Tokenizer};

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar unreachable: {0}")]
    Transport(String),
    #[error("input exceeds the model context window")]
    OverWindow,
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("sidecar returned HTTP {status}: {message}")]
    Server { status: u16, message: String },
    #[error("batch item {index} failed with {status}: {message}")]
    Item { index: usize, status: u16, message: String },
    #[error("malformed sidecar response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenEmbeddingResponse {
    pub model: String,
    pub tokens: Vec<String>,
    pub offsets: Vec<[usize; 2]>,
    pub vectors: Vec<Vec<f32>>,
    pub dims: usize,
}

#[derive(Debug, Serialize)]
struct TokenEmbeddingRequest<'a> {
    model: &'a str,
    text: &'a str,
}

#[derive(Debug, Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
    #[serde(skip_serializing_if = "Option::is_none")]
    input_type: Option<&'a str>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemError {
    pub status: u16,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingsResponse {
    pub vectors: Vec<Option<Vec<f32>>>,
    #[serde(default)]
    pub errors: Vec<Option<ItemError>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub window: usize,
    pub dims: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelList {
    models: Vec<ModelInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputType {
    Query,
    Passage,
}

impl InputType {
    fn as_str(self) -> &'static str {
        match self {
            InputType::Query => "query",
            InputType::Passage => "passage",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SidecarConfig {
    pub base_url: String,
    pub model: String,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl SidecarConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        SidecarConfig {
            base_url: base_url.into(),
            model: model.into(),
            max_in_flight: 8,
            timeout: Duration::from_secs(300),
        }
    }
}

#[derive(Debug)]
pub struct SidecarClient {
    cfg: SidecarConfig,
    http: reqwest::blocking::Client,
    in_flight: Semaphore,
}

impl SidecarClient {
    pub fn new(cfg: SidecarConfig) -> Result<Self, SidecarError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| SidecarError::Transport(e.to_string()))?;
        let in_flight = Semaphore::new(cfg.max_in_flight);
        Ok(SidecarClient { cfg, http, in_flight })
    }

    pub fn config(&self) -> &SidecarConfig {
        &self.cfg
    }

    pub fn model(&self) -> &str {
        &self.cfg.model
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    fn check(&self, resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, SidecarError> {
        let status = resp.status().as_u16();
        match status {
            200..=299 => Ok(resp),
            413 => Err(SidecarError::OverWindow),
            404 => Err(SidecarError::UnknownModel(self.cfg.model.clone())),
            _ => Err(SidecarError::Server { status, message: resp.text().unwrap_or_default() }),
        }
    }

    pub fn models(&self) -> Result<Vec<ModelInfo>, SidecarError> {
        let _permit = self.in_flight.acquire();
        let resp = self.http.get(self.url("/v1/models")).send().map_err(|e| SidecarError::Transport(e.to_string()))?;
        let list: ModelList = self.check(resp)?.json().map_err(|e| SidecarError::Decode(e.to_string()))?;
        Ok(list.models)
    }

    pub fn token_embeddings(&self, text: &str) -> Result<TokenEmbeddingResponse, SidecarError> {
        let _permit = self.in_flight.acquire();
        let resp = self
            .http
            .post(self.url("/v1/token_embeddings"))
            .json(&TokenEmbeddingRequest { model: &self.cfg.model, text })
            .send()
            .map_err(|e| SidecarError::Transport(e.to_string()))?;
        let body: TokenEmbeddingResponse = self.check(resp)?.json().map_err(|e| SidecarError::Decode(e.to_string()))?;
        if body.tokens.len() != body.offsets.len() || body.tokens.len() != body.vectors.len() {
            return Err(SidecarError::Decode(format!(
                "length mismatch: {} tokens, {} offsets, {} vectors",
                body.tokens.len(),
                body.offsets.len(),
                body.vectors.len()
            )));
        }
        if let Some(v) = body.vectors.iter().find(|v| v.len() != body.dims) {
            return Err(SidecarError::Decode(format!("vector of {} dims, header says {}", v.len(), body.dims)));
        }
        Ok(body)
    }

    /// Pooled embeddings for one batch, in input order.
    pub fn embeddings(&self, texts: &[&str], input_type: Option<InputType>) -> Result<Vec<Vec<f32>>, SidecarError> {
        let _permit = self.in_flight.acquire();
        let resp = self
            .http
            .post(self.url("/v1/embeddings"))
            .json(&EmbeddingsRequest { model: &self.cfg.model, texts, input_type: input_type.map(InputType::as_str) })
            .send()
            .map_err(|e| SidecarError::Transport(e.to_string()))?;
        let body: EmbeddingsResponse = self.check(resp)?.json().map_err(|e| SidecarError::Decode(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(SidecarError::Decode(format!("{} vectors for {} texts", body.vectors.len(), texts.len())));
        }
        body.vectors
            .into_iter()
            .enumerate()
            .map(|(index, v)| match v {
                Some(v) => Ok(v),
                None => {
                    let err = body.errors.get(index).cloned().flatten();
                    Err(SidecarError::Item {
                        index,
                        status: err.as_ref().map_or(500, |e| e.status),
                        message: err.map_or_else(|| "missing vector".into(), |e| e.message),
                    })
                }
            })
            .collect()
    }

    /// Token offsets for arbitrarily long text: on 413 the text is split at
    /// the whitespace nearest its middle and both halves are tokenized.
    pub fn token_map(&self, text: &str) -> Result<TokenMap, TokenizeError> {
        let mut spans = Vec::new();
        self.collect_spans(text, 0, &mut spans)?;
        TokenMap::from_spans(text, spans)
    }

    fn collect_spans(&self, text: &str, offset: usize, out: &mut Vec<Span>) -> Result<(), TokenizeError> {
        if text.trim().is_empty() {
            return Ok(());
        }
        match self.token_embeddings(text) {
            Ok(resp) => {
                out.extend(resp.offsets.iter().map(|[s, e]| Span::new(s + offset, e + offset)));
                Ok(())
            }
            Err(SidecarError::OverWindow) => {
                let mid = split_point(text);
                if mid == 0 || mid >= text.len() {
                    return Err(SidecarError::OverWindow.into());
                }
                self.collect_spans(&text[..mid], offset, out)?;
                self.collect_spans(&text[mid..], offset + mid, out)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Byte index of the whitespace char nearest the middle, else the middle
/// char boundary.
fn split_point(text: &str) -> usize {
    let mid = (text.len() / 2..=text.len()).find(|&i| text.is_char_boundary(i)).unwrap_or(text.len());
    let before = text[..mid].rfind(char::is_whitespace);
    let after = text[mid..].find(char::is_whitespace).map(|i| i + mid);
    match (before, after) {
        (Some(b), Some(a)) => {
            if mid - b <= a - mid {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => mid,
    }
}

/// The model's own tokenizer, via the sidecar's offsets.
#[derive(Debug, Clone)]
pub struct SidecarTokenizer(pub std::sync::Arc<SidecarClient>);

impl Tokenizer for SidecarTokenizer {
    fn tokenize(&self, text: &str) -> Result<TokenMap, TokenizeError> {
        self.0.token_map(text)
    }

    fn scheme(&self) -> String {
        format!("remote:{}", self.0.model())
    }
}
