use super::{paragraph_spans, prompts, Chunk, ChunkOutput, ChunkerConfig, Method, SegmentError};
use crate::corpus::Document;
use crate::llm::{LanguageModel, LlmRequest};
use crate::span::Span;
use crate::tokenizer::Tokenizer;

/// LumberChunker: grow a paragraph group until it reaches the token
/// budget, ask the LLM where the topic first shifts, cut there, repeat
/// from the shift paragraph.
///
/// An answer naming the group's first paragraph or falling outside the
/// group emits the whole group, so every iteration consumes at least one
/// paragraph.
pub fn chunk_lumber(
    doc: &Document,
    cfg: &ChunkerConfig,
    tokenizer: &dyn Tokenizer,
    llm: &dyn LanguageModel,
) -> Result<ChunkOutput, SegmentError> {
    let paragraphs = paragraph_spans(&doc.text);
    let sizes: Vec<usize> =
        paragraphs.iter().map(|p| tokenizer.count_tokens(p.slice(&doc.text))).collect::<Result<_, _>>()?;

    let mut out = ChunkOutput::default();
    let mut cursor = 0;
    while cursor < paragraphs.len() {
        let mut end = cursor;
        let mut tokens = 0;
        while end < paragraphs.len() && (end == cursor || tokens < cfg.lumber_token_budget) {
            tokens += sizes[end];
            end += 1;
        }
        let group = &paragraphs[cursor..end];
        let cut = if group.len() == 1 {
            end
        } else {
            match ask_shift(doc, group, cfg, llm)? {
                Some(k) if k >= 2 && k <= group.len() => cursor + k - 1,
                Some(_) => end,
                None => {
                    out.llm_fallbacks += 1;
                    end
                }
            }
        };
        let span = Span::new(paragraphs[cursor].start, paragraphs[cut - 1].end);
        out.chunks.push(Chunk::sliced(doc, Method::Lumber, out.chunks.len(), span));
        cursor = cut;
    }
    Ok(out)
}

/// 1-based shift paragraph within the group, or `None` if no answer parsed.
fn ask_shift(
    doc: &Document,
    group: &[Span],
    cfg: &ChunkerConfig,
    llm: &dyn LanguageModel,
) -> Result<Option<usize>, SegmentError> {
    let prompt = prompts::lumber_prompt(group.iter().map(|p| p.slice(&doc.text)));
    for attempt in 0..=cfg.llm_parse_retries {
        let req = LlmRequest::new(prompt.clone(), cfg.llm_model.clone()).with_attempt(attempt);
        if let Some(k) = prompts::parse_index(&llm.complete(&req)?) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}
