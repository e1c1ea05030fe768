use std::sync::Arc;

use rayon::prelude::*;

use super::{EmbedError, Embedder, EmbedderDescriptor, EmbeddingVector, TokenEmbeddings};
use crate::embedding::Backend;
use crate::sidecar::{InputType, SidecarClient, SidecarError, SidecarTokenizer};
use crate::span::Span;
use crate::tokenizer::{TokenMap, Tokenizer};

const BATCH: usize = 32;

/// Transformer checkpoint served by the sidecar.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: Arc<SidecarClient>,
    tokenizer: SidecarTokenizer,
    dims: usize,
    window: usize,
}

impl RemoteEmbedder {
    /// Looks the configured model up in `GET /v1/models`.
    pub fn connect(client: Arc<SidecarClient>) -> Result<Self, EmbedError> {
        let info = client
            .models()?
            .into_iter()
            .find(|m| m.name == client.model())
            .ok_or_else(|| SidecarError::UnknownModel(client.model().to_owned()))?;
        Ok(RemoteEmbedder { tokenizer: SidecarTokenizer(client.clone()), client, dims: info.dims, window: info.window })
    }

    fn batched(&self, texts: &[&str], input_type: InputType) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        // par_chunks + collect keeps input order; the client bounds in-flight requests.
        let batches: Vec<Vec<Vec<f32>>> = texts
            .par_chunks(BATCH)
            .map(|batch| self.client.embeddings(batch, Some(input_type)))
            .collect::<Result<_, _>>()?;
        batches
            .into_iter()
            .flatten()
            .map(|v| {
                if v.len() != self.dims {
                    return Err(EmbedError::Dims { expected: self.dims, got: v.len() });
                }
                Ok(EmbeddingVector::from_raw(v))
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn context_window(&self) -> usize {
        self.window
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn descriptor(&self) -> EmbedderDescriptor {
        EmbedderDescriptor {
            backend: Backend::Remote,
            model: self.client.model().to_owned(),
            dims: self.dims,
            lambda: None,
            seed: None,
            context_window_tokens: self.window,
        }
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, EmbedError> {
        let resp = self.client.token_embeddings(text).map_err(|e| match e {
            SidecarError::OverWindow => EmbedError::OverWindow { tokens: self.window + 1, window: self.window },
            other => other.into(),
        })?;
        if resp.dims != self.dims {
            return Err(EmbedError::Dims { expected: self.dims, got: resp.dims });
        }
        let token_map = TokenMap::from_spans(text, resp.offsets.iter().map(|[s, e]| Span::new(*s, *e)))?;
        let vectors = resp.vectors.into_iter().map(EmbeddingVector::from_raw).collect();
        Ok(TokenEmbeddings { token_map, vectors, window_id: 0 })
    }

    fn embed_chunk(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.batched(&[text], InputType::Passage)?.remove(0))
    }

    fn embed_query(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.batched(&[text], InputType::Query)?.remove(0))
    }

    fn embed_chunks(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        self.batched(texts, InputType::Passage)
    }

    fn embed_queries(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        self.batched(texts, InputType::Query)
    }
}
