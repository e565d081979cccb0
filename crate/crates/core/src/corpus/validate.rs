use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, FRAGMENT_TOKEN_RANGE, TOOL_TOKEN_RANGE};
use crate::tokenize::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    DuplicateId { kind: String, id: String },
    DuplicateText { kind: String, first: String, second: String },
    TokenRange { kind: String, id: String, token_cost: u64, min: u64, max: u64 },
    MissingOverlay,
}

impl ValidationIssue {
    pub fn severity(&self) -> Severity {
        match self {
            ValidationIssue::DuplicateId { .. } | ValidationIssue::MissingOverlay => Severity::Error,
            ValidationIssue::DuplicateText { .. } | ValidationIssue::TokenRange { .. } => Severity::Warning,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity() == Severity::Error)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }
}

/// Reports duplicate ids, duplicate normalized texts, out-of-band token
/// costs and a missing overlay. Never mutates the corpus.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut issues = Vec::new();

    let fragments = corpus.fragments.iter().map(|f| (f.id.as_str(), f.text.clone(), f.token_cost));
    check_kind("fragment", fragments, FRAGMENT_TOKEN_RANGE, &mut issues);
    // The first rendered line is the name/id header; compare bodies only.
    let tools = corpus.tools.iter().map(|t| {
        let rendered = t.render();
        let body = rendered.split_once('\n').map_or("", |(_, b)| b).to_string();
        (t.id.as_str(), body, t.token_cost)
    });
    check_kind("tool", tools, TOOL_TOKEN_RANGE, &mut issues);

    if corpus.safety_overlay.as_ref().is_none_or(|o| o.text.trim().is_empty()) {
        issues.push(ValidationIssue::MissingOverlay);
    }
    ValidationReport { issues }
}

fn check_kind<'a>(
    kind: &str,
    items: impl Iterator<Item = (&'a str, String, u64)>,
    (min, max): (u64, u64),
    issues: &mut Vec<ValidationIssue>,
) {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut texts: BTreeMap<String, &str> = BTreeMap::new();
    for (id, text, token_cost) in items {
        let seen = ids.entry(id).or_default();
        *seen += 1;
        if *seen == 2 {
            issues.push(ValidationIssue::DuplicateId {
                kind: kind.to_string(),
                id: id.to_string(),
            });
        }
        let key = normalize_text(&text);
        match texts.get(&key) {
            Some(first) => issues.push(ValidationIssue::DuplicateText {
                kind: kind.to_string(),
                first: first.to_string(),
                second: id.to_string(),
            }),
            None => {
                texts.insert(key, id);
            }
        }
        if token_cost < min || token_cost > max {
            issues.push(ValidationIssue::TokenRange {
                kind: kind.to_string(),
                id: id.to_string(),
                token_cost,
                min,
                max,
            });
        }
    }
}
