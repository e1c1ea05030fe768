//! Deterministic hash embedder with exponential context mixing.
//!
//! Base vector of a token `t` (dims `d`, seed `s`):
//!
//! ```text
//! base  = fnv1a64(s.to_le_bytes() ++ utf8(t))
//! z_k   = splitmix64_finalize(base + (k + 1) * 0x9E3779B97F4A7C15)   (wrapping)
//! c_k   = 2 * (z_k >> 11) / 2^53 - 1                                   in [-1, 1)
//! h(t)  = c / |c|
//! ```
//!
//! Contextualized vector at position `i`:
//! `v_i = normalize(sum_j lambda^|i-j| * h(t_j))`.

use super::{mean_pool, EmbedError, Embedder, EmbedderDescriptor, EmbedderSpec, EmbeddingVector, TokenEmbeddings};
use crate::embedding::Backend;
use crate::tokenizer::{BuiltinTokenizer, Tokenizer};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn fnv1a64(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `h(t)` in f64, unit length.
pub fn base_vector(token: &str, dims: usize, seed: u64) -> Vec<f64> {
    let base = fnv1a64(&[&seed.to_le_bytes(), token.as_bytes()]);
    let mut v: Vec<f64> = (0..dims as u64)
        .map(|k| {
            let z = splitmix_finalize(base.wrapping_add((k + 1).wrapping_mul(GOLDEN)));
            2.0 * ((z >> 11) as f64 / (1u64 << 53) as f64) - 1.0
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Applies `v_i = normalize(sum_j lambda^|i-j| h_j)` in O(n * d) using a
/// forward and a backward geometric recurrence.
pub fn contextualize(bases: &[Vec<f64>], lambda: f64) -> Vec<EmbeddingVector> {
    let n = bases.len();
    if n == 0 {
        return Vec::new();
    }
    if lambda == 0.0 {
        return bases.iter().map(|h| EmbeddingVector::normalized_from(h)).collect();
    }
    let dims = bases[0].len();
    // forward[i] = sum_{j<=i} lambda^(i-j) h_j
    let mut forward = vec![vec![0f64; dims]; n];
    forward[0].clone_from(&bases[0]);
    for i in 1..n {
        let (done, rest) = forward.split_at_mut(i);
        for ((f, &p), &h) in rest[0].iter_mut().zip(&done[i - 1]).zip(&bases[i]) {
            *f = h + lambda * p;
        }
    }
    // walk backwards: acc = sum_{j>i} lambda^(j-i) h_j
    let mut out = vec![EmbeddingVector { values: Vec::new(), normalized: false }; n];
    let mut acc = vec![0f64; dims];
    let mut total = vec![0f64; dims];
    for i in (0..n).rev() {
        for ((t, &f), &a) in total.iter_mut().zip(&forward[i]).zip(&acc) {
            *t = f + a;
        }
        out[i] = EmbeddingVector::normalized_from(&total);
        for (a, &h) in acc.iter_mut().zip(&bases[i]) {
            *a = lambda * (*a + h);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    spec: EmbedderSpec,
    tokenizer: BuiltinTokenizer,
}

impl ReferenceEmbedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self, EmbedError> {
        spec.validate()?;
        Ok(ReferenceEmbedder { spec, tokenizer: BuiltinTokenizer })
    }

    pub fn with(dims: usize, lambda: f64) -> Self {
        Self::new(EmbedderSpec::reference(dims, lambda)).expect("valid reference spec")
    }

    pub fn lambda(&self) -> f64 {
        self.spec.context_mix_lambda
    }
}

impl Embedder for ReferenceEmbedder {
    fn dims(&self) -> usize {
        self.spec.dims
    }

    fn context_window(&self) -> usize {
        self.spec.context_window_tokens
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn descriptor(&self) -> EmbedderDescriptor {
        EmbedderDescriptor {
            backend: Backend::Reference,
            model: self.spec.model_name.clone(),
            dims: self.spec.dims,
            lambda: Some(self.spec.context_mix_lambda),
            seed: Some(self.spec.seed),
            context_window_tokens: self.spec.context_window_tokens,
        }
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, EmbedError> {
        let token_map = BuiltinTokenizer::map(text);
        if token_map.len() > self.spec.context_window_tokens {
            return Err(EmbedError::OverWindow { tokens: token_map.len(), window: self.spec.context_window_tokens });
        }
        let bases: Vec<Vec<f64>> =
            token_map.tokens.iter().map(|t| base_vector(&t.text, self.spec.dims, self.spec.seed)).collect();
        let vectors = contextualize(&bases, self.spec.context_mix_lambda);
        Ok(TokenEmbeddings { token_map, vectors, window_id: 0 })
    }

    fn embed_chunk(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let te = self.embed_tokens(text)?;
        mean_pool(te.vectors.iter().map(|v| v.values.as_slice()), self.spec.dims).ok_or(EmbedError::EmptyText)
    }

    fn embed_query(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        self.embed_chunk(text)
    }
}
