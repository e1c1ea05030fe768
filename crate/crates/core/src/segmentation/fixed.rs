use super::{chunks_from_spans, Chunk, Method, SegmentError};
use crate::corpus::Document;
use crate::tokenizer::Tokenizer;

/// Consecutive, non-overlapping groups of `size` tokens; the last group
/// may be shorter.
pub fn chunk_fixed(doc: &Document, size: usize, tokenizer: &dyn Tokenizer) -> Result<Vec<Chunk>, SegmentError> {
    if size == 0 {
        return Err(SegmentError::Config("fixed_size_tokens must be positive".into()));
    }
    let map = tokenizer.tokenize(&doc.text)?;
    let n = map.len();
    let spans = (0..n).step_by(size).filter_map(|first| map.cover(first..(first + size).min(n)));
    Ok(chunks_from_spans(doc, Method::Fixed, spans))
}
