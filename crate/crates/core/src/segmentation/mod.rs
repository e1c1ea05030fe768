//! The six segmentation methods.
//!
//! | method      | unit                       | boundary rule                                  |
//! |-------------|----------------------------|------------------------------------------------|
//! | paragraph   | `\n`-delimited line        | drop empty / whitespace-only lines             |
//! | fixed       | tokens                     | every `fixed_size_tokens`, no overlap          |
//! | sentence    | sentences                  | every `sentences_per_chunk`                    |
//! | semantic    | sentences                  | adjacent distance above a percentile threshold |
//! | proposition | LLM-extracted facts        | one chunk per proposition                      |
//! | lumber      | paragraphs                 | LLM-chosen topic shift within a token budget   |
//!
//! All methods but `proposition` are span-preserving: `chunk.text` is the
//! document slice at `chunk.char_span`.

mod fixed;
mod io;
mod lumber;
mod paragraph;
pub mod prompts;
mod proposition;
mod semantic;
pub mod sentence;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::embedding::{EmbedError, Embedder};
use crate::llm::{LanguageModel, LlmError};
use crate::span::Span;
use crate::tokenizer::{TokenizeError, Tokenizer};

pub use fixed::chunk_fixed;
pub use io::{read_chunks, write_chunks};
pub use lumber::chunk_lumber;
pub use paragraph::{chunk_paragraph, paragraph_spans};
pub use proposition::chunk_proposition;
pub use semantic::{chunk_semantic, percentile_linear, semantic_boundaries};
pub use sentence::{chunk_sentence, sentence_spans};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("invalid chunker config: {0}")]
    Config(String),
    #[error("method `{0}` needs {1}")]
    Missing(Method, &'static str),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("chunk file {path}:{line}: {message}")]
    ChunkFile { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Paragraph,
    Fixed,
    Sentence,
    Semantic,
    Proposition,
    Lumber,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Paragraph, Method::Fixed, Method::Sentence, Method::Semantic, Method::Proposition, Method::Lumber];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Paragraph => "paragraph",
            Method::Fixed => "fixed",
            Method::Sentence => "sentence",
            Method::Semantic => "semantic",
            Method::Proposition => "proposition",
            Method::Lumber => "lumber",
        }
    }

    pub fn is_span_preserving(self) -> bool {
        self != Method::Proposition
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, Method::Proposition | Method::Lumber)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown segmentation method `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub index: usize,
    #[serde(flatten)]
    pub char_span: Span,
    pub method: Method,
    /// Text produced by an LLM rather than sliced from the document.
    #[serde(default)]
    pub generated_text: bool,
    pub text: String,
}

impl Chunk {
    pub fn make_id(doc_id: &str, method: Method, index: usize) -> String {
        format!("{doc_id}#{method}#{index}")
    }

    pub(crate) fn sliced(doc: &Document, method: Method, index: usize, span: Span) -> Chunk {
        Chunk {
            chunk_id: Chunk::make_id(&doc.doc_id, method, index),
            doc_id: doc.doc_id.clone(),
            index,
            char_span: span,
            method,
            generated_text: false,
            text: span.slice(&doc.text).to_owned(),
        }
    }
}

pub(crate) fn chunks_from_spans(doc: &Document, method: Method, spans: impl IntoIterator<Item = Span>) -> Vec<Chunk> {
    spans.into_iter().enumerate().map(|(i, s)| Chunk::sliced(doc, method, i, s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkerConfig {
    pub fixed_size_tokens: usize,
    pub sentences_per_chunk: usize,
    pub semantic_percentile: f64,
    pub lumber_token_budget: usize,
    /// Model name sent with LLM requests.
    pub llm_model: String,
    /// Re-asks after an unparseable LLM answer before falling back.
    pub llm_parse_retries: u32,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        ChunkerConfig {
            fixed_size_tokens: 256,
            sentences_per_chunk: 5,
            semantic_percentile: 95.0,
            lumber_token_budget: 550,
            llm_model: "gemini-2.5-flash".into(),
            llm_parse_retries: 2,
        }
    }
}

impl ChunkerConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.fixed_size_tokens == 0 || self.sentences_per_chunk == 0 || self.lumber_token_budget == 0 {
            return Err(SegmentError::Config("sizes and budgets must be positive".into()));
        }
        if !(self.semantic_percentile > 0.0 && self.semantic_percentile < 100.0) {
            return Err(SegmentError::Config(format!(
                "semantic_percentile must be in (0, 100), got {}",
                self.semantic_percentile
            )));
        }
        Ok(())
    }
}

/// Chunks of one document plus how many LLM answers had to be replaced
/// by a fallback.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkOutput {
    pub chunks: Vec<Chunk>,
    pub llm_fallbacks: usize,
}

impl From<Vec<Chunk>> for ChunkOutput {
    fn from(chunks: Vec<Chunk>) -> Self {
        ChunkOutput { chunks, llm_fallbacks: 0 }
    }
}

/// Everything a chunker may need.
#[derive(Clone, Copy)]
pub struct Segmenter<'a> {
    pub config: &'a ChunkerConfig,
    pub tokenizer: &'a dyn Tokenizer,
    pub embedder: Option<&'a dyn Embedder>,
    pub llm: Option<&'a dyn LanguageModel>,
}

impl<'a> Segmenter<'a> {
    pub fn chunk(&self, method: Method, doc: &Document) -> Result<ChunkOutput, SegmentError> {
        self.config.validate()?;
        Ok(match method {
            Method::Paragraph => chunk_paragraph(doc).into(),
            Method::Fixed => chunk_fixed(doc, self.config.fixed_size_tokens, self.tokenizer)?.into(),
            Method::Sentence => chunk_sentence(doc, self.config.sentences_per_chunk).into(),
            Method::Semantic => {
                let embedder = self.embedder.ok_or(SegmentError::Missing(method, "an embedder"))?;
                chunk_semantic(doc, self.config.semantic_percentile, embedder)?.into()
            }
            Method::Proposition => {
                let llm = self.llm.ok_or(SegmentError::Missing(method, "an LLM"))?;
                chunk_proposition(doc, self.config, llm)?
            }
            Method::Lumber => {
                let llm = self.llm.ok_or(SegmentError::Missing(method, "an LLM"))?;
                chunk_lumber(doc, self.config, self.tokenizer, llm)?
            }
        })
    }

    /// Chunks every document (in parallel), preserving document order.
    pub fn chunk_all(&self, method: Method, docs: &[Document]) -> Result<ChunkOutput, SegmentError> {
        let outs: Vec<ChunkOutput> = docs.par_iter().map(|d| self.chunk(method, d)).collect::<Result<_, _>>()?;
        Ok(outs.into_iter().fold(ChunkOutput::default(), |mut acc, o| {
            acc.chunks.extend(o.chunks);
            acc.llm_fallbacks += o.llm_fallbacks;
            acc
        }))
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::doc;
    use super::*;

    #[test]
    fn sentence_groups_of_five() {
        let text: String = (0..12).map(|i| format!("Sentence number {i} here.")).collect::<Vec<_>>().join(" ");
        let d = doc(&text);
        let chunks = chunk_sentence(&d, 5);
        let counts: Vec<usize> = chunks.iter().map(|c| sentence_spans(&c.text).len()).collect();
        assert_eq!(counts, [5, 5, 2]);
        assert_eq!(chunks[0].chunk_id, "d#sentence#0");
        assert_eq!(chunk_sentence(&doc("No terminal punctuation"), 5).len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(ChunkerConfig::default().validate().is_ok());
        assert!(ChunkerConfig { semantic_percentile: 100.0, ..Default::default() }.validate().is_err());
        assert!(ChunkerConfig { semantic_percentile: 0.0, ..Default::default() }.validate().is_err());
        assert!(ChunkerConfig { fixed_size_tokens: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("recursive".parse::<Method>().is_err());
    }

    #[test]
    fn missing_dependencies_are_reported() {
        let cfg = ChunkerConfig::default();
        let tok = crate::tokenizer::BuiltinTokenizer;
        let seg = Segmenter { config: &cfg, tokenizer: &tok, embedder: None, llm: None };
        assert!(matches!(seg.chunk(Method::Semantic, &doc("A. B.")), Err(SegmentError::Missing(..))));
        assert!(matches!(seg.chunk(Method::Lumber, &doc("A")), Err(SegmentError::Missing(..))));
    }
}
