//! Chunk-level and token-level embeddings.

mod artifact;
mod reference;
mod remote;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sidecar::{SidecarClient, SidecarConfig, SidecarError};
use crate::tokenizer::{TokenMap, TokenizeError, Tokenizer};

pub use artifact::{read_artifact, write_artifact, ArtifactHeader};
pub use reference::{base_vector, contextualize, ReferenceEmbedder};
pub use remote::RemoteEmbedder;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("{tokens} tokens exceed the {window}-token context window")]
    OverWindow { tokens: usize, window: usize },
    #[error("invalid embedder spec: {0}")]
    Config(String),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dims { expected: usize, got: usize },
    #[error("artifact {path}: {message}")]
    Artifact { path: String, message: String },
}

/// A dense vector. `normalized` is false only for the zero vector, which
/// has no direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub normalized: bool,
}

impl EmbeddingVector {
    /// L2-normalizes `values` (computed in f64, stored as f32).
    pub fn normalized_from(values: &[f64]) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return EmbeddingVector { values: vec![0.0; values.len()], normalized: false };
        }
        EmbeddingVector { values: values.iter().map(|v| (v / norm) as f32).collect(), normalized: true }
    }

    pub fn from_raw(values: Vec<f32>) -> Self {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        Self::normalized_from(&v)
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Arithmetic mean of the given vectors, then L2-normalized. `None` when
/// there are no vectors.
pub fn mean_pool<'a>(vectors: impl IntoIterator<Item = &'a [f32]>, dims: usize) -> Option<EmbeddingVector> {
    let mut acc = vec![0f64; dims];
    let mut n = 0usize;
    for v in vectors {
        debug_assert_eq!(v.len(), dims);
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x as f64;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Some(EmbeddingVector::normalized_from(&acc))
}

/// Token vectors for one window of text.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    pub token_map: TokenMap,
    pub vectors: Vec<EmbeddingVector>,
    pub window_id: usize,
}

impl TokenEmbeddings {
    pub fn dims(&self) -> usize {
        self.vectors.first().map_or(0, EmbeddingVector::dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Reference,
    Remote,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Backend::Reference),
            "remote" => Ok(Backend::Remote),
            _ => Err(format!("unknown backend `{s}` (reference | remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderSpec {
    pub backend: Backend,
    pub dims: usize,
    pub context_mix_lambda: f64,
    pub context_window_tokens: usize,
    pub model_name: String,
    pub seed: u64,
    /// Sidecar base URL for the remote backend.
    pub endpoint: Option<String>,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec {
            backend: Backend::Reference,
            dims: 64,
            context_mix_lambda: 0.5,
            context_window_tokens: 8192,
            model_name: "reference".into(),
            seed: 0,
            endpoint: None,
        }
    }
}

impl EmbedderSpec {
    pub fn reference(dims: usize, lambda: f64) -> Self {
        EmbedderSpec { dims, context_mix_lambda: lambda, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dims < 8 {
            return Err(EmbedError::Config(format!("dims must be >= 8, got {}", self.dims)));
        }
        if self.context_window_tokens < 16 {
            return Err(EmbedError::Config(format!(
                "context_window_tokens must be >= 16, got {}",
                self.context_window_tokens
            )));
        }
        if !(0.0..1.0).contains(&self.context_mix_lambda) {
            return Err(EmbedError::Config(format!("lambda must be in [0, 1), got {}", self.context_mix_lambda)));
        }
        if self.backend == Backend::Remote && self.endpoint.is_none() {
            return Err(EmbedError::Config("remote backend needs an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self.backend {
            Backend::Reference => Arc::new(ReferenceEmbedder::new(self.clone())?),
            Backend::Remote => {
                let mut cfg = SidecarConfig::new(self.endpoint.clone().unwrap_or_default(), self.model_name.clone());
                cfg.max_in_flight = 8;
                Arc::new(RemoteEmbedder::connect(Arc::new(SidecarClient::new(cfg)?))?)
            }
        })
    }
}

/// Provenance written into artifact headers and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderDescriptor {
    pub backend: Backend,
    pub model: String,
    pub dims: usize,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub context_window_tokens: usize,
}

pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;

    fn context_window(&self) -> usize;

    fn tokenizer(&self) -> &dyn Tokenizer;

    fn descriptor(&self) -> EmbedderDescriptor;

    /// Contextualized token vectors for `text`, which must fit the window.
    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, EmbedError>;

    /// Pre-embedding chunk vector: the chunk is embedded in isolation.
    fn embed_chunk(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_query(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_chunks(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.par_iter().map(|t| self.embed_chunk(t)).collect()
    }

    fn embed_queries(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.par_iter().map(|t| self.embed_query(t)).collect()
    }
}
