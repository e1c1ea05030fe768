use super::{LanguageModel, LlmError, LlmRequest};
use crate::segmentation::prompts;
use crate::segmentation::sentence::sentence_spans;

/// Deterministic stand-in for a chat model.
///
/// * lumber prompts: answers `min(3, group size)`
/// * proposition prompts: the passage's sentences, each further split at
///   top-level `" and "`, as a numbered list
/// * anything else: echoes `"OK"`
#[derive(Debug, Clone, Copy, Default)]
pub struct StubLlm;

/// Splits at `" and "` outside parentheses/brackets.
fn split_top_level_and(sentence: &str) -> Vec<&str> {
    let bytes = sentence.as_bytes();
    let mut depth = 0i32;
    let mut parts = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b' ' if depth <= 0 && sentence[i..].starts_with(" and ") => {
                parts.push(&sentence[start..i]);
                i += " and ".len();
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    parts.push(&sentence[start..]);
    parts.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}

pub(crate) fn stub_propositions(passage: &str) -> Vec<String> {
    sentence_spans(passage).into_iter().flat_map(|s| split_top_level_and(s.slice(passage))).map(str::to_owned).collect()
}

impl LanguageModel for StubLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        req.validate()?;
        if let Some(size) = prompts::lumber_group_size(&req.prompt) {
            return Ok(size.min(3).to_string());
        }
        if prompts::is_proposition_prompt(&req.prompt) {
            let passage = prompts::extract_passage(&req.prompt).unwrap_or_default();
            let items = stub_propositions(passage);
            return Ok(items.iter().enumerate().map(|(i, p)| format!("{}. {p}", i + 1)).collect::<Vec<_>>().join("\n"));
        }
        Ok("OK".into())
    }

    fn model_name(&self) -> String {
        "stub".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lumber_answer() {
        let p = prompts::lumber_prompt(["a", "b", "c", "d"]);
        assert_eq!(StubLlm.complete(&LlmRequest::new(p, "stub")).unwrap(), "3");
        let p = prompts::lumber_prompt(["a", "b"]);
        assert_eq!(StubLlm.complete(&LlmRequest::new(p, "stub")).unwrap(), "2");
    }

    #[test]
    fn proposition_answer() {
        let p = prompts::proposition_prompt("Paris is the capital of France and has 2M people.");
        let out = StubLlm.complete(&LlmRequest::new(p, "stub")).unwrap();
        assert_eq!(out, "1. Paris is the capital of France\n2. has 2M people.");
    }

    #[test]
    fn and_inside_brackets_is_kept() {
        assert_eq!(split_top_level_and("salt (and pepper) and oil"), ["salt (and pepper)", "oil"]);
    }

    #[test]
    fn pure() {
        let p = prompts::proposition_prompt("A and B. C.");
        let r = LlmRequest::new(p, "stub");
        assert_eq!(StubLlm.complete(&r).unwrap(), StubLlm.complete(&r).unwrap());
    }
}
