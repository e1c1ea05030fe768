//! Contextualized (late) chunking: embed the whole document's tokens,
//! then pool token vectors inside each chunk's span.
//!
//! Documents longer than the context window are cut into the minimum
//! number of windows, filled greedily, without overlap. A chunk that
//! straddles a window boundary is pooled over its tokens from both.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::embedding::{mean_pool, EmbedError, Embedder, EmbeddingVector, TokenEmbeddings};
use crate::segmentation::Chunk;
use crate::span::Span;
use crate::tokenizer::TokenMap;

pub const WINDOW_RULE: &str = "greedy-fill, no overlap, cross-window chunks pooled over both windows";

#[derive(Debug, Error)]
pub enum LateChunkError {
    #[error("context window must hold at least one token")]
    ZeroWindow,
    #[error("chunk {0} covers no tokens")]
    EmptySpan(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub window_id: usize,
    /// `[first, last)` indices into the document token map.
    pub token_range: (usize, usize),
    pub char_span: Span,
}

impl Window {
    pub fn len(&self) -> usize {
        self.token_range.1 - self.token_range.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkTokenSpan {
    pub chunk_id: String,
    pub token_range: (usize, usize),
}

impl ChunkTokenSpan {
    pub fn is_empty(&self) -> bool {
        self.token_range.0 >= self.token_range.1
    }
}

/// `ceil(T / W)` windows; all but the last hold exactly `W` tokens.
pub fn partition_windows(token_map: &TokenMap, context_window_tokens: usize) -> Result<Vec<Window>, LateChunkError> {
    if context_window_tokens == 0 {
        return Err(LateChunkError::ZeroWindow);
    }
    let total = token_map.len();
    Ok((0..total)
        .step_by(context_window_tokens)
        .enumerate()
        .map(|(window_id, first)| {
            let last = (first + context_window_tokens).min(total);
            Window {
                window_id,
                token_range: (first, last),
                char_span: token_map.cover(first..last).expect("non-empty window"),
            }
        })
        .collect())
}

/// Tokens whose span intersects the chunk span.
pub fn map_chunk_to_tokens(chunk: &Chunk, token_map: &TokenMap) -> ChunkTokenSpan {
    let r = token_map.intersecting(chunk.char_span);
    ChunkTokenSpan { chunk_id: chunk.chunk_id.clone(), token_range: (r.start, r.end) }
}

/// Token vectors of all windows, addressed by document token index.
pub struct DocumentTokens<'a> {
    windows: &'a [TokenEmbeddings],
    starts: Vec<usize>,
}

impl<'a> DocumentTokens<'a> {
    pub fn new(windows: &'a [TokenEmbeddings]) -> Self {
        let mut starts = Vec::with_capacity(windows.len());
        let mut n = 0;
        for w in windows {
            starts.push(n);
            n += w.vectors.len();
        }
        DocumentTokens { windows, starts }
    }

    pub fn len(&self) -> usize {
        self.windows.iter().map(|w| w.vectors.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenated token map in document coordinates.
    pub fn token_map(&self) -> TokenMap {
        let mut tokens = Vec::with_capacity(self.len());
        let mut source_len = 0;
        for w in self.windows {
            tokens.extend(w.token_map.tokens.iter().cloned());
            source_len = source_len.max(w.token_map.source_len);
        }
        TokenMap { tokens, source_len }
    }

    fn vectors(&self, range: (usize, usize)) -> impl Iterator<Item = &'a [f32]> + '_ {
        (range.0..range.1).map(move |i| {
            let w = self.starts.partition_point(|&s| s <= i) - 1;
            self.windows[w].vectors[i - self.starts[w]].values.as_slice()
        })
    }
}

/// Mean of the span's token vectors across windows, L2-normalized.
pub fn pool_span(tokens: &DocumentTokens<'_>, span: &ChunkTokenSpan) -> Result<EmbeddingVector, LateChunkError> {
    if span.is_empty() {
        return Err(LateChunkError::EmptySpan(span.chunk_id.clone()));
    }
    let dims = tokens.windows.iter().find_map(|w| w.vectors.first()).map_or(0, EmbeddingVector::dims);
    mean_pool(tokens.vectors(span.token_range), dims).ok_or_else(|| LateChunkError::EmptySpan(span.chunk_id.clone()))
}

/// Token embeddings per window, offsets re-based to document coordinates.
pub fn embed_document_windows(doc: &Document, embedder: &dyn Embedder) -> Result<Vec<TokenEmbeddings>, LateChunkError> {
    let token_map = embedder.tokenizer().tokenize(&doc.text).map_err(EmbedError::from)?;
    let windows = partition_windows(&token_map, embedder.context_window())?;
    windows
        .iter()
        .map(|w| {
            let te = embedder.embed_tokens(w.char_span.slice(&doc.text))?;
            Ok(TokenEmbeddings {
                token_map: te.token_map.shifted(w.char_span.start, doc.text.len()),
                vectors: te.vectors,
                window_id: w.window_id,
            })
        })
        .collect()
}

/// One vector per chunk, in chunk order. Proposition chunks are pooled
/// over their source paragraph's span.
pub fn contextualized_embed_document(
    doc: &Document,
    chunks: &[Chunk],
    embedder: &dyn Embedder,
) -> Result<Vec<EmbeddingVector>, LateChunkError> {
    let windows = embed_document_windows(doc, embedder)?;
    let tokens = DocumentTokens::new(&windows);
    let map = tokens.token_map();
    chunks.iter().map(|c| pool_span(&tokens, &map_chunk_to_tokens(c, &map))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbedderSpec, ReferenceEmbedder};
    use crate::segmentation::{chunk_fixed, chunk_paragraph, Method};
    use crate::tokenizer::BuiltinTokenizer;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{}", i % 37)).collect::<Vec<_>>().join(" ")
    }

    fn doc(text: &str) -> Document {
        Document { doc_id: "d".into(), title: String::new(), text: text.into(), meta: Default::default() }
    }

    #[test]
    fn window_partition_examples() {
        let map = BuiltinTokenizer::map(&words(10_000));
        let w = partition_windows(&map, 8192).unwrap();
        assert_eq!(w.iter().map(|w| w.token_range).collect::<Vec<_>>(), [(0, 8192), (8192, 10_000)]);
        assert_eq!(partition_windows(&BuiltinTokenizer::map(&words(8192)), 8192).unwrap().len(), 1);
        assert!(partition_windows(&TokenMap::default(), 8192).unwrap().is_empty());
        assert!(matches!(partition_windows(&map, 0), Err(LateChunkError::ZeroWindow)));
    }

    #[test]
    fn chunk_token_mapping() {
        let text = "aa bb cc dd ee ff gg hh";
        let map = BuiltinTokenizer::map(text);
        let mk = |s: usize, e: usize| Chunk {
            chunk_id: "c".into(),
            doc_id: "d".into(),
            index: 0,
            char_span: Span::new(s, e),
            method: Method::Fixed,
            generated_text: false,
            text: text[s..e].into(),
        };
        assert_eq!(map_chunk_to_tokens(&mk(9, 23), &map).token_range, (3, 8));
        assert_eq!(map_chunk_to_tokens(&mk(1, 4), &map).token_range, (0, 2));
        assert!(map_chunk_to_tokens(&mk(11, 12), &map).is_empty());
    }

    #[test]
    fn empty_span_is_an_error() {
        let e = ReferenceEmbedder::with(16, 0.5);
        let w = vec![e.embed_tokens("a b").unwrap()];
        let t = DocumentTokens::new(&w);
        let span = ChunkTokenSpan { chunk_id: "x".into(), token_range: (1, 1) };
        assert!(matches!(pool_span(&t, &span), Err(LateChunkError::EmptySpan(_))));
    }

    #[test]
    fn zero_context_identity() {
        let e = ReferenceEmbedder::with(64, 0.0);
        let d = doc("First para has words.\nSecond one, too.\n\nThird para here.");
        let chunks = chunk_paragraph(&d);
        let con = contextualized_embed_document(&d, &chunks, &e).unwrap();
        for (c, v) in chunks.iter().zip(&con) {
            let pre = e.embed_chunk(&c.text).unwrap();
            for (a, b) in pre.values.iter().zip(&v.values) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn whole_document_chunk_is_mean_of_tokens() {
        let e = ReferenceEmbedder::with(32, 0.6);
        let d = doc("one two three four five");
        let chunk = Chunk::sliced(&d, Method::Paragraph, 0, Span::new(0, d.text.len()));
        let con = contextualized_embed_document(&d, &[chunk], &e).unwrap();
        let te = e.embed_tokens(&d.text).unwrap();
        let expect = mean_pool(te.vectors.iter().map(|v| v.values.as_slice()), 32).unwrap();
        assert_eq!(con[0], expect);
    }

    #[test]
    fn context_leaks_across_boundary() {
        let e = ReferenceEmbedder::with(64, 0.5);
        let d = doc("Alpha beta gamma.\nDelta epsilon zeta.");
        let chunks = chunk_paragraph(&d);
        let con = contextualized_embed_document(&d, &chunks, &e).unwrap();
        for (c, v) in chunks.iter().zip(&con) {
            assert!(1.0 - e.embed_chunk(&c.text).unwrap().dot(v) > 1e-4);
        }
    }

    #[test]
    fn straddling_chunk_pools_over_both_windows() {
        // 40 tokens, window 16: windows [0,16), [16,32), [32,40)
        let spec = EmbedderSpec { context_window_tokens: 16, ..EmbedderSpec::reference(32, 0.4) };
        let e = ReferenceEmbedder::new(spec).unwrap();
        let d = doc(&words(40));
        let chunks = chunk_fixed(&d, 12, &BuiltinTokenizer).unwrap();
        let con = contextualized_embed_document(&d, &chunks, &e).unwrap();

        let windows = embed_document_windows(&d, &e).unwrap();
        assert_eq!(windows.len(), 3);
        let concat: Vec<&EmbeddingVector> = windows.iter().flat_map(|w| &w.vectors).collect();
        // chunk 1 = tokens [12, 24) straddles windows 0 and 1
        let expect = mean_pool(concat[12..24].iter().map(|v| v.values.as_slice()), 32).unwrap();
        assert_eq!(con[1], expect);
    }

    #[test]
    fn single_window_pooling_matches_when_doc_fits() {
        let small =
            ReferenceEmbedder::new(EmbedderSpec { context_window_tokens: 16, ..EmbedderSpec::reference(32, 0.0) })
                .unwrap();
        let big = ReferenceEmbedder::with(32, 0.0);
        let d = doc(&words(40));
        let chunks = chunk_fixed(&d, 12, &BuiltinTokenizer).unwrap();
        // at lambda 0 window boundaries do not matter
        let a = contextualized_embed_document(&d, &chunks, &small).unwrap();
        let b = contextualized_embed_document(&d, &chunks, &big).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooling_is_count_weighted_over_partitions() {
        let e = ReferenceEmbedder::with(16, 0.5);
        let w = vec![e.embed_tokens(&words(10)).unwrap()];
        let t = DocumentTokens::new(&w);
        let raw_mean = |r: (usize, usize)| -> Vec<f64> {
            let mut acc = [0f64; 16];
            for v in t.vectors(r) {
                for (a, &x) in acc.iter_mut().zip(v) {
                    *a += x as f64;
                }
            }
            acc.iter().map(|a| a / (r.1 - r.0) as f64).collect()
        };
        let whole = raw_mean((0, 10));
        let left = raw_mean((0, 3));
        let right = raw_mean((3, 10));
        for i in 0..16 {
            let combined = (3.0 * left[i] + 7.0 * right[i]) / 10.0;
            assert!((whole[i] - combined).abs() < 1e-12);
        }
    }
}
