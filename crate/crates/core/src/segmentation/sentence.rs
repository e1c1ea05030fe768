//! Regex sentence boundaries.
//!
//! A boundary follows `.`, `!`, `?` or `…` (a run of them), optionally
//! followed by closing quotes or brackets, when the next non-whitespace
//! char after at least one whitespace is an uppercase letter or a digit.
//! A `.` that ends one of [`ABBREVIATIONS`] is never a boundary.

use std::sync::LazyLock;

use regex::Regex;

use super::{chunks_from_spans, Chunk, Method};
use crate::corpus::Document;
use crate::span::Span;

pub const ABBREVIATIONS: [&str; 9] = ["Mr.", "Mrs.", "Dr.", "Prof.", "St.", "vs.", "e.g.", "i.e.", "etc."];

static BOUNDARY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"[.!?…]+["'”’»)\]]*(\s+)[\p{Lu}\p{Nd}]"#).unwrap());

fn ends_with_abbreviation(text: &str, dot_end: usize) -> bool {
    let head = &text[..dot_end];
    ABBREVIATIONS.iter().any(|abbr| {
        head.ends_with(abbr) && {
            let before = &head[..head.len() - abbr.len()];
            before.chars().next_back().is_none_or(|c| !c.is_alphanumeric())
        }
    })
}

/// Sentence spans, trimmed of surrounding whitespace, in order.
pub fn sentence_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = match text.find(|c: char| !c.is_whitespace()) {
        Some(s) => s,
        None => return spans,
    };
    for caps in BOUNDARY.captures_iter(text) {
        let ws = caps.get(1).expect("group 1 always participates");
        let term_end = ws.start();
        if term_end <= start {
            continue;
        }
        let term = &text[caps.get(0).unwrap().start()..term_end];
        let last_punct = term.trim_end_matches(|c: char| !matches!(c, '.' | '!' | '?' | '…'));
        if last_punct.ends_with('.') && !last_punct.ends_with("..") {
            let dot_end = caps.get(0).unwrap().start() + last_punct.len();
            if ends_with_abbreviation(text, dot_end) {
                continue;
            }
        }
        spans.push(Span::new(start, term_end));
        start = ws.end();
    }
    let end = text.trim_end().len();
    if end > start {
        spans.push(Span::new(start, end));
    }
    spans
}

/// Groups of `per_chunk` consecutive sentences.
pub fn chunk_sentence(doc: &Document, per_chunk: usize) -> Vec<Chunk> {
    let sentences = sentence_spans(&doc.text);
    let spans = sentences.chunks(per_chunk.max(1)).map(|g| Span::new(g[0].start, g[g.len() - 1].end));
    chunks_from_spans(doc, Method::Sentence, spans)
}
