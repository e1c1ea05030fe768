use super::{chunks_from_spans, sentence_spans, Chunk, Method, SegmentError};
use crate::corpus::Document;
use crate::embedding::Embedder;
use crate::span::Span;

/// Percentile with linear interpolation between closest ranks over the
/// sorted values (`pos = p/100 * (n - 1)`).
pub fn percentile_linear(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty list");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices `i` with a boundary after sentence `i`: `d_i > percentile(d, p)`.
pub fn semantic_boundaries(distances: &[f64], percentile: f64) -> Vec<usize> {
    if distances.is_empty() {
        return Vec::new();
    }
    let threshold = percentile_linear(distances, percentile);
    distances.iter().enumerate().filter(|(_, &d)| d > threshold).map(|(i, _)| i).collect()
}

/// Splits between adjacent sentences whose cosine distance exceeds the
/// given percentile of all adjacent distances.
pub fn chunk_semantic(doc: &Document, percentile: f64, embedder: &dyn Embedder) -> Result<Vec<Chunk>, SegmentError> {
    let sentences = sentence_spans(&doc.text);
    if sentences.len() <= 1 {
        return Ok(chunks_from_spans(doc, Method::Semantic, sentences));
    }
    let texts: Vec<&str> = sentences.iter().map(|s| s.slice(&doc.text)).collect();
    let vectors = embedder.embed_chunks(&texts)?;
    let distances: Vec<f64> = vectors.windows(2).map(|w| 1.0 - w[0].dot(&w[1])).collect();
    let mut spans = Vec::new();
    let mut first = 0;
    for b in semantic_boundaries(&distances, percentile) {
        spans.push(Span::new(sentences[first].start, sentences[b].end));
        first = b + 1;
    }
    spans.push(Span::new(sentences[first].start, sentences[sentences.len() - 1].end));
    Ok(chunks_from_spans(doc, Method::Semantic, spans))
}
