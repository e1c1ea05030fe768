//! Versioned prompt templates for the LLM-guided chunkers.

use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};

pub const PROPOSITION_TEMPLATE: &str = include_str!("prompts/proposition.txt");
pub const LUMBER_TEMPLATE: &str = include_str!("prompts/lumber.txt");

pub(crate) const PASSAGE_OPEN: &str = "<passage>\n";
pub(crate) const PASSAGE_CLOSE: &str = "\n</passage>";

static NUMBERED_ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\d+\s*[.)]\s+(.*\S)\s*$").unwrap());
static LUMBER_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^Paragraph (\d+): ").unwrap());

pub fn proposition_prompt(passage: &str) -> String {
    PROPOSITION_TEMPLATE.replace("{passage}", passage)
}

pub fn lumber_prompt<'a>(paragraphs: impl IntoIterator<Item = &'a str>) -> String {
    let body: Vec<String> =
        paragraphs.into_iter().enumerate().map(|(i, p)| format!("Paragraph {}: {}", i + 1, p)).collect();
    LUMBER_TEMPLATE.replace("{paragraphs}", &body.join("\n"))
}

/// `sha256` of each template, recorded in run manifests.
pub fn template_hashes() -> Vec<(&'static str, String)> {
    [("proposition", PROPOSITION_TEMPLATE), ("lumber", LUMBER_TEMPLATE)]
        .into_iter()
        .map(|(name, t)| (name, hex::encode(Sha256::digest(t.as_bytes()))))
        .collect()
}

/// Items of a numbered list; `None` if the text holds no numbered item.
pub fn parse_numbered_list(response: &str) -> Option<Vec<String>> {
    let items: Vec<String> =
        response.lines().filter_map(|l| NUMBERED_ITEM.captures(l).map(|c| c[1].to_owned())).collect();
    (!items.is_empty()).then_some(items)
}

/// First integer in the response.
pub fn parse_index(response: &str) -> Option<usize> {
    let start = response.find(|c: char| c.is_ascii_digit())?;
    let digits: String = response[start..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

pub(crate) fn is_proposition_prompt(prompt: &str) -> bool {
    prompt.starts_with("Decompose the passage") && prompt.contains(PASSAGE_OPEN)
}

pub(crate) fn extract_passage(prompt: &str) -> Option<&str> {
    let start = prompt.find(PASSAGE_OPEN)? + PASSAGE_OPEN.len();
    let end = prompt.rfind(PASSAGE_CLOSE)?;
    (start <= end).then(|| &prompt[start..end])
}

/// Number of `Paragraph N:` lines in a lumber prompt, if it is one.
pub(crate) fn lumber_group_size(prompt: &str) -> Option<usize> {
    if !prompt.starts_with("You will receive consecutive paragraphs") {
        return None;
    }
    Some(prompt.lines().filter(|l| LUMBER_LINE.is_match(l)).count())
}
