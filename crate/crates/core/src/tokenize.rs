//! Token counting and term extraction.
//!
//! Token costs drive every budget decision in the crate, so the counter is a
//! trait: the default approximates a subword tokenizer as one token per four
//! characters, and real tokenizers can be plugged in behind the same contract.

/// Counts prompt tokens for a piece of text.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// `ceil(chars / 4)`, counting Unicode scalar values.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarterCharCounter;

impl TokenCounter for QuarterCharCounter {
    fn count(&self, text: &str) -> u64 {
        (text.chars().count() as u64).div_ceil(4)
    }
}

/// Token count under the default counter.
pub fn count_tokens(text: &str) -> u64 {
    QuarterCharCounter.count(text)
}

/// Lowercased alphanumeric terms, used by BM25 and the lexical re-ranker.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whitespace tokens with surrounding punctuation stripped, lowercased.
/// This is what the hashing embedder buckets.
pub fn whitespace_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercase and collapse runs of whitespace to a single space.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
