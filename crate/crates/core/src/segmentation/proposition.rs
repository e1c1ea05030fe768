use super::{paragraph_spans, prompts, Chunk, ChunkOutput, ChunkerConfig, Method, SegmentError};
use crate::corpus::Document;
use crate::llm::{LanguageModel, LlmRequest};

/// One chunk per LLM-extracted proposition, paragraph by paragraph.
///
/// Proposition chunks carry their source paragraph's span. A paragraph
/// whose answers stay unparseable after the configured retries becomes a
/// single chunk holding the paragraph itself. Transport errors propagate.
pub fn chunk_proposition(
    doc: &Document,
    cfg: &ChunkerConfig,
    llm: &dyn LanguageModel,
) -> Result<ChunkOutput, SegmentError> {
    let mut out = ChunkOutput::default();
    for span in paragraph_spans(&doc.text) {
        let paragraph = span.slice(&doc.text);
        let prompt = prompts::proposition_prompt(paragraph);
        let mut parsed = None;
        for attempt in 0..=cfg.llm_parse_retries {
            let req = LlmRequest::new(prompt.clone(), cfg.llm_model.clone()).with_attempt(attempt);
            if let Some(items) = prompts::parse_numbered_list(&llm.complete(&req)?) {
                parsed = Some(items);
                break;
            }
        }
        let (texts, generated) = match parsed {
            Some(items) => (items, true),
            None => {
                out.llm_fallbacks += 1;
                (vec![paragraph.to_owned()], false)
            }
        };
        for text in texts {
            let index = out.chunks.len();
            out.chunks.push(Chunk {
                chunk_id: Chunk::make_id(&doc.doc_id, Method::Proposition, index),
                doc_id: doc.doc_id.clone(),
                index,
                char_span: span,
                method: Method::Proposition,
                generated_text: generated,
                text,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::doc;
    use super::*;
    use crate::llm::{LlmError, StubLlm};
    use crate::span::Span;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn stub_splits_and_clauses() {
        let out = chunk_proposition(
            &doc("Paris is the capital of France and has 2M people."),
            &ChunkerConfig::default(),
            &StubLlm,
        )
        .unwrap();
        assert_eq!(out.chunks.len(), 2);
        assert_eq!(out.chunks[0].text, "Paris is the capital of France");
        assert!(out.chunks.iter().all(|c| c.generated_text && c.char_span == Span::new(0, 49)));
        assert_eq!(out.llm_fallbacks, 0);
    }

    #[test]
    fn spans_point_at_source_paragraph() {
        let d = doc("A is B. C is D.\n\nE and F.");
        let out = chunk_proposition(&d, &ChunkerConfig::default(), &StubLlm).unwrap();
        let spans: Vec<&str> = out.chunks.iter().map(|c| c.char_span.slice(&d.text)).collect();
        assert_eq!(spans, ["A is B. C is D.", "A is B. C is D.", "E and F.", "E and F."]);
        assert_eq!(out.chunks.iter().map(|c| c.index).collect::<Vec<_>>(), [0, 1, 2, 3]);
    }

    #[test]
    fn empty_document() {
        let out = chunk_proposition(&doc(" \n "), &ChunkerConfig::default(), &StubLlm).unwrap();
        assert!(out.chunks.is_empty());
    }

    struct Garbage(AtomicU32);

    impl LanguageModel for Garbage {
        fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
            assert_eq!(req.attempt, self.0.fetch_add(1, Ordering::SeqCst));
            Ok("I cannot do that".into())
        }
        fn model_name(&self) -> String {
            "garbage".into()
        }
    }

    #[test]
    fn malformed_answers_fall_back_to_paragraph() {
        let llm = Garbage(AtomicU32::new(0));
        let out = chunk_proposition(&doc("Some paragraph."), &ChunkerConfig::default(), &llm).unwrap();
        assert_eq!(llm.0.load(Ordering::SeqCst), 3);
        assert_eq!(out.chunks.len(), 1);
        assert_eq!(out.chunks[0].text, "Some paragraph.");
        assert!(!out.chunks[0].generated_text);
        assert_eq!(out.llm_fallbacks, 1);
    }
}
