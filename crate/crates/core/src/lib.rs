//! Chunking design-space benchmark.
//!
//! Six segmentation methods (paragraph, fixed-size, sentence, semantic,
//! proposition, LumberChunker) crossed with two embedding orderings:
//!
//! ```text
//! pre-embedding:   document -> chunks -> embed(chunk) each in isolation
//! contextualized:  document -> token vectors (per window) -> pool(chunk span)
//! ```
//!
//! Chunk vectors feed brute-force dense retrieval for two tasks:
//! in-document (rank chunks of one book, DCG@10 with overlap relevance)
//! and in-corpus (rank documents by MaxP, nDCG@10 against qrels).
//!
//! Everything needed to run the pipeline at desk scale is deterministic:
//! a built-in tokenizer, a hash-based reference embedder whose `lambda`
//! knob controls how much surrounding context leaks into a token vector,
//! and a stub LLM for the LLM-guided chunkers. Real models plug in through
//! the sidecar HTTP client and the chat-completion gateway.

pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod late_chunking;
pub mod llm;
pub mod retrieval;
pub mod segmentation;
pub mod sidecar;
pub mod span;
mod sync;
pub mod tokenizer;

pub use corpus::{Collection, Document, GroundTruthSpan, Qrels, Query};
pub use embedding::{Embedder, EmbedderSpec, EmbeddingVector, ReferenceEmbedder, TokenEmbeddings};
pub use evaluation::{EvalReport, SignificanceResult};
pub use late_chunking::{ChunkTokenSpan, Window};
pub use llm::{LanguageModel, LlmRequest};
pub use retrieval::{ChunkIndex, RunResult, Task};
pub use segmentation::{Chunk, ChunkerConfig, Method};
pub use span::Span;
pub use tokenizer::{TokenMap, Tokenizer};
