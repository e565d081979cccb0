use std::collections::VecDeque;

use regex::Regex;
use sha2::{Digest, Sha256};
use std::sync::LazyLock;

use super::{CorpusError, InstructionFragment, PolicyType};
use crate::tokenize::TokenCounter;

static PARAGRAPH_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n[ \t]*\n").unwrap());

const SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone)]
pub struct ChunkOptions {
    pub min_tokens: u64,
    pub max_tokens: u64,
    pub domain: String,
    pub policy_type: PolicyType,
    /// Unix seconds stamped on every produced fragment.
    pub recency: i64,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        ChunkOptions {
            min_tokens: 200,
            max_tokens: 600,
            domain: String::new(),
            policy_type: PolicyType::Other,
            recency: 0,
        }
    }
}

/// Splits a document into instruction fragments by greedy paragraph packing.
///
/// Consecutive paragraphs accumulate until the next one would push the
/// fragment over `max_tokens`. A fragment that would be emitted below
/// `min_tokens` is instead topped up with the leading sentences (or words)
/// of the next paragraph, and paragraphs larger than `max_tokens` are split
/// at sentence boundaries. Only the final fragment may be undersized.
///
/// Fragment ids are content-addressed from `(doc_id, ordinal, text)`, and
/// `priority` is the ordinal, so re-chunking is byte-for-byte deterministic.
pub fn chunk_document(
    doc_id: &str,
    doc: &str,
    opts: &ChunkOptions,
    counter: &dyn TokenCounter,
) -> Result<Vec<InstructionFragment>, CorpusError> {
    if opts.max_tokens == 0 || opts.min_tokens > opts.max_tokens {
        return Err(CorpusError::InvalidChunkBounds {
            min: opts.min_tokens,
            max: opts.max_tokens,
        });
    }

    let mut pending: VecDeque<String> = PARAGRAPH_BREAK
        .split(doc)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect();

    let mut texts: Vec<String> = Vec::new();
    let mut acc: Option<String> = None;
    while let Some(unit) = pending.pop_front() {
        let joined = join(acc.as_deref(), &unit);
        if counter.count(&joined) <= opts.max_tokens {
            acc = Some(joined);
            continue;
        }
        match acc.take() {
            Some(a) if counter.count(&a) >= opts.min_tokens => {
                texts.push(a);
                pending.push_front(unit);
            }
            undersized => match split_to_fit(undersized.as_deref(), &unit, opts, counter) {
                Some((head, tail)) => {
                    texts.push(join(undersized.as_deref(), head));
                    if !tail.is_empty() {
                        pending.push_front(tail.to_string());
                    }
                }
                None => {
                    // Not a single character fits after the accumulator.
                    texts.extend(undersized);
                    pending.push_front(unit);
                }
            },
        }
    }
    texts.extend(acc);

    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(ordinal, text)| InstructionFragment {
            id: fragment_id(doc_id, ordinal, &text),
            token_cost: counter.count(&text),
            text,
            domain: opts.domain.clone(),
            policy_type: opts.policy_type,
            priority: ordinal as i32,
            recency: opts.recency,
            pinned: false,
        })
        .collect())
}

fn fragment_id(doc_id: &str, ordinal: usize, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(doc_id.as_bytes());
    hasher.update([0]);
    hasher.update((ordinal as u64).to_le_bytes());
    hasher.update(text.as_bytes());
    format!("frag-{}", hex::encode(&hasher.finalize()[..8]))
}

fn join(acc: Option<&str>, next: &str) -> String {
    match acc {
        Some(a) if !a.is_empty() => format!("{a}{SEPARATOR}{next}"),
        _ => next.to_string(),
    }
}

/// Splits `unit` into a non-empty head that fits after `acc` and the rest.
///
/// Tries sentence boundaries, then word boundaries, then raw characters.
/// A coarser boundary is accepted only if it keeps the resulting fragment
/// at or above `min_tokens`. Returns `None` only when `acc` is non-empty and
/// nothing fits after it.
fn split_to_fit<'a>(
    acc: Option<&str>,
    unit: &'a str,
    opts: &ChunkOptions,
    counter: &dyn TokenCounter,
) -> Option<(&'a str, &'a str)> {
    let fits = |end: usize| counter.count(&join(acc, unit[..end].trim_end())) <= opts.max_tokens;
    let sentence = boundaries(unit, sentence_starts);
    let word = boundaries(unit, word_starts);
    let chars: Vec<usize> = unit.char_indices().map(|(i, _)| i).skip(1).collect();

    let mut fallback = None;
    for candidates in [&sentence, &word, &chars] {
        if let Some(end) = last_fitting(candidates, &fits) {
            let size = counter.count(&join(acc, unit[..end].trim_end()));
            if size >= opts.min_tokens {
                return Some((unit[..end].trim_end(), unit[end..].trim_start()));
            }
            fallback.get_or_insert(end);
        }
    }
    let end = match (fallback, acc) {
        (Some(end), _) => end,
        (None, Some(a)) if !a.is_empty() => return None,
        // A lone paragraph always gives up at least one character.
        (None, _) => chars.first().copied().unwrap_or(unit.len()),
    };
    Some((unit[..end].trim_end(), unit[end..].trim_start()))
}

/// Largest candidate offset whose prefix fits. Fit is monotone in prefix
/// length, so binary search is valid.
fn last_fitting(candidates: &[usize], fits: &dyn Fn(usize) -> bool) -> Option<usize> {
    let n = candidates.partition_point(|&end| fits(end));
    n.checked_sub(1).map(|i| candidates[i])
}

fn boundaries(text: &str, starts: fn(&str) -> Vec<usize>) -> Vec<usize> {
    starts(text)
        .into_iter()
        .filter(|&i| i > 0 && i < text.len())
        .collect()
}

/// Byte offsets where a new sentence begins.
fn sentence_starts(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev_terminal = false;
    let mut in_gap = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if prev_terminal {
                in_gap = true;
            }
            prev_terminal = false;
            continue;
        }
        if in_gap {
            out.push(i);
            in_gap = false;
        }
        prev_terminal = matches!(c, '.' | '!' | '?');
    }
    out
}

/// Byte offsets where a new word begins.
fn word_starts(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev_ws = false;
    for (i, c) in text.char_indices() {
        if !c.is_whitespace() && prev_ws {
            out.push(i);
        }
        prev_ws = c.is_whitespace();
    }
    out
}
