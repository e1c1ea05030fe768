use super::{chunks_from_spans, Chunk, Method};
use crate::corpus::Document;
use crate::span::Span;

/// Spans of the `\n`-delimited lines that contain non-whitespace.
pub fn paragraph_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = 0;
    for line in text.split('\n') {
        if !line.trim().is_empty() {
            spans.push(Span::new(start, start + line.len()));
        }
        start += line.len() + 1;
    }
    spans
}

pub fn chunk_paragraph(doc: &Document) -> Vec<Chunk> {
    chunks_from_spans(doc, Method::Paragraph, paragraph_spans(&doc.text))
}
