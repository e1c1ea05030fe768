//! Token maps: tokens with byte spans into their source text.
//!
//! The built-in scheme is fully determined by three rules: a maximal run
//! of Unicode letters/digits is one token, every other non-whitespace
//! codepoint is its own token, and whitespace is never a token.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sidecar::SidecarError;
use crate::span::Span;

#[derive(Debug, Error)]
pub enum TokenizeError {
    #[error("remote tokenizer: {0}")]
    Remote(#[from] SidecarError),
    #[error("tokenizer returned inconsistent offsets: {0}")]
    BadOffsets(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMap {
    pub tokens: Vec<Token>,
    pub source_len: usize,
}

impl TokenMap {
    /// Builds a map from spans into `source`, validating the invariants.
    pub fn from_spans(source: &str, spans: impl IntoIterator<Item = Span>) -> Result<Self, TokenizeError> {
        let mut tokens = Vec::new();
        let mut prev_end = 0;
        for span in spans {
            if span.is_empty() || span.start < prev_end || span.end > source.len() {
                return Err(TokenizeError::BadOffsets(format!("{span:?} after {prev_end} in {} bytes", source.len())));
            }
            let text = source
                .get(span.start..span.end)
                .ok_or_else(|| TokenizeError::BadOffsets(format!("{span:?} is not on a char boundary")))?;
            tokens.push(Token { text: text.to_owned(), span });
            prev_end = span.end;
        }
        Ok(TokenMap { tokens, source_len: source.len() })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        self.tokens.iter().map(|t| t.span)
    }

    /// Indices `[first, last)` of tokens whose span intersects `span`.
    pub fn intersecting(&self, span: Span) -> std::ops::Range<usize> {
        let first = self.tokens.partition_point(|t| t.span.end <= span.start);
        let last = self.tokens.partition_point(|t| t.span.start < span.end);
        if span.is_empty() || first >= last {
            first..first
        } else {
            first..last
        }
    }

    /// Byte span from the first token's start to the last token's end.
    pub fn cover(&self, range: std::ops::Range<usize>) -> Option<Span> {
        if range.is_empty() {
            return None;
        }
        Some(Span::new(self.tokens[range.start].span.start, self.tokens[range.end - 1].span.end))
    }

    /// The same tokens re-based by `offset` bytes into a larger source.
    pub fn shifted(mut self, offset: usize, source_len: usize) -> TokenMap {
        for t in &mut self.tokens {
            t.span = t.span.shifted(offset);
        }
        self.source_len = source_len;
        self
    }
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Result<TokenMap, TokenizeError>;

    fn count_tokens(&self, text: &str) -> Result<usize, TokenizeError> {
        Ok(self.tokenize(text)?.len())
    }

    /// Short identifier recorded in manifests.
    fn scheme(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinTokenizer;

impl BuiltinTokenizer {
    pub fn spans(text: &str) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut run: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                run.get_or_insert(i);
                continue;
            }
            if let Some(start) = run.take() {
                spans.push(Span::new(start, i));
            }
            if !ch.is_whitespace() {
                spans.push(Span::new(i, i + ch.len_utf8()));
            }
        }
        if let Some(start) = run {
            spans.push(Span::new(start, text.len()));
        }
        spans
    }

    pub fn count(text: &str) -> usize {
        Self::spans(text).len()
    }

    pub fn map(text: &str) -> TokenMap {
        TokenMap {
            tokens: Self::spans(text)
                .into_iter()
                .map(|span| Token { text: span.slice(text).to_owned(), span })
                .collect(),
            source_len: text.len(),
        }
    }
}

impl Tokenizer for BuiltinTokenizer {
    fn tokenize(&self, text: &str) -> Result<TokenMap, TokenizeError> {
        Ok(Self::map(text))
    }

    fn count_tokens(&self, text: &str) -> Result<usize, TokenizeError> {
        Ok(Self::count(text))
    }

    fn scheme(&self) -> String {
        "builtin".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hello_world() {
        let m = BuiltinTokenizer::map("Hello, world");
        let texts: Vec<_> = m.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["Hello", ",", "world"]);
        let spans: Vec<_> = m.spans().collect();
        assert_eq!(spans, [Span::new(0, 5), Span::new(5, 6), Span::new(7, 12)]);
        assert_eq!(BuiltinTokenizer.count_tokens("Hello, world").unwrap(), 3);
    }

    #[test]
    fn empty() {
        assert!(BuiltinTokenizer::map("").is_empty());
        assert_eq!(BuiltinTokenizer::count(""), 0);
        assert_eq!(BuiltinTokenizer::count(" \n\t "), 0);
    }

    #[test]
    fn six_hundred_words() {
        let text = vec!["a"; 600].join(" ");
        assert_eq!(BuiltinTokenizer::count(&text), 600);
    }

    #[test]
    fn unicode_runs() {
        let m = BuiltinTokenizer::map("café—naïve 42x ü");
        let texts: Vec<_> = m.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["café", "—", "naïve", "42x", "ü"]);
    }

    #[test]
    fn intersecting_rule() {
        let m = BuiltinTokenizer::map("aa bb cc dd ee ff gg hh");
        // tokens 3..=7 are "dd".."hh" at [9,11) .. [21,23)
        assert_eq!(m.intersecting(Span::new(9, 23)), 3..8);
        // splitting a token's bytes still includes it
        assert_eq!(m.intersecting(Span::new(10, 13)), 3..5);
        // whitespace only
        assert_eq!(m.intersecting(Span::new(11, 12)).len(), 0);
    }

    #[test]
    fn from_spans_validates() {
        assert!(TokenMap::from_spans("abc", [Span::new(0, 2), Span::new(1, 3)]).is_err());
        assert!(TokenMap::from_spans("abc", [Span::new(0, 4)]).is_err());
        assert!(TokenMap::from_spans("é", [Span::new(0, 1)]).is_err());
        assert_eq!(TokenMap::from_spans("abc", [Span::new(0, 3)]).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn round_trip_reconstructs_source(s in "\\PC{0,80}") {
            let m = BuiltinTokenizer::map(&s);
            let mut rebuilt = String::new();
            let mut pos = 0;
            for t in &m.tokens {
                prop_assert!(t.span.start >= pos);
                let gap = &s[pos..t.span.start];
                prop_assert!(gap.chars().all(char::is_whitespace));
                rebuilt.push_str(gap);
                prop_assert_eq!(t.span.slice(&s), t.text.as_str());
                rebuilt.push_str(&t.text);
                pos = t.span.end;
            }
            prop_assert!(s[pos..].chars().all(char::is_whitespace));
            rebuilt.push_str(&s[pos..]);
            prop_assert_eq!(rebuilt, s);
        }

        #[test]
        fn count_is_monotone_under_concat(a in "\\PC{0,40}", b in "\\PC{0,40}") {
            let ab = format!("{a}{b}");
            let n = BuiltinTokenizer::count(&ab);
            prop_assert!(n >= BuiltinTokenizer::count(&a).max(BuiltinTokenizer::count(&b)));
        }
    }
}
