//! Instruction and tool corpora.
//!
//! A [`Corpus`] holds the two retrievable document kinds (instruction
//! fragments and tool specifications) together with the always-on safety
//! overlay and the routing note template. Corpus values are immutable: every
//! edit returns a new corpus with a fresh content version and an appended
//! change-log entry.

mod chunk;
mod io;
mod validate;

pub use chunk::{chunk_document, ChunkOptions};
pub use io::{load_dir, load_jsonl, save_jsonl, CorpusRecord};
pub use validate::{validate_corpus, Severity, ValidationIssue, ValidationReport};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

use crate::tokenize::TokenCounter;

/// Fragment token band produced by chunking.
pub const FRAGMENT_TOKEN_RANGE: (u64, u64) = (200, 600);
/// Token band for corpus-conformant tool documents.
pub const TOOL_TOKEN_RANGE: (u64, u64) = (150, 800);
/// Exemplars rendered per tool.
pub const MAX_RENDERED_EXEMPLARS: usize = 2;

pub const DEFAULT_ROUTING_NOTE: &str = "Use only the tools listed above and do not call tools that are not shown. \
If the exposed tools are insufficient for this step, request \"tool discovery\" instead of guessing.";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid chunk bounds: min_tokens {min} > max_tokens {max} or max_tokens is 0")]
    InvalidChunkBounds { min: u64, max: u64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {path}:{line}: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("corpus failed validation: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyType {
    Role,
    Style,
    Safety,
    Exemplar,
    Policy,
    #[default]
    Other,
}

/// A retrievable chunk of the system prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionFragment {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub policy_type: PolicyType,
    /// Lower renders earlier.
    #[serde(default)]
    pub priority: i32,
    /// Unix seconds.
    #[serde(default)]
    pub recency: i64,
    #[serde(default)]
    pub pinned: bool,
    #[serde(default)]
    pub token_cost: u64,
}

impl InstructionFragment {
    pub fn new(id: impl Into<String>, text: impl Into<String>, counter: &dyn TokenCounter) -> Self {
        let text = text.into();
        InstructionFragment {
            id: id.into(),
            token_cost: counter.count(&text),
            text,
            domain: String::new(),
            policy_type: PolicyType::Other,
            priority: 0,
            recency: 0,
            pinned: false,
        }
    }
}

/// A tool/function document: schema, contract and worked examples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub argument_schema: String,
    #[serde(default)]
    pub preconditions: Vec<String>,
    #[serde(default)]
    pub postconditions: Vec<String>,
    #[serde(default)]
    pub failure_modes: Vec<String>,
    #[serde(default)]
    pub exemplars: Vec<String>,
    #[serde(default)]
    pub token_cost: u64,
    #[serde(default)]
    pub pinned: bool,
    #[serde(default)]
    pub domain: String,
}

impl ToolSpec {
    /// The text exposed to the model for this tool. At most
    /// [`MAX_RENDERED_EXEMPLARS`] exemplars are included.
    pub fn render(&self) -> String {
        let mut out = format!("### Tool: {} [{}]\n{}", self.name, self.id, self.description);
        if !self.argument_schema.is_empty() {
            out.push_str("\nArguments:\n");
            out.push_str(&self.argument_schema);
        }
        push_list(&mut out, "Preconditions", &self.preconditions);
        push_list(&mut out, "Postconditions", &self.postconditions);
        push_list(&mut out, "Failure modes", &self.failure_modes);
        let exemplars: Vec<String> = self
            .exemplars
            .iter()
            .take(MAX_RENDERED_EXEMPLARS)
            .cloned()
            .collect();
        push_list(&mut out, "Examples", &exemplars);
        out
    }

    /// Name plus the first sentence of the description.
    pub fn summary_line(&self) -> String {
        format!("- {}: {}", self.name, first_sentence(&self.description))
    }

    pub fn with_cost(mut self, counter: &dyn TokenCounter) -> Self {
        self.token_cost = counter.count(&self.render());
        self
    }
}

fn push_list(out: &mut String, title: &str, items: &[String]) {
    if items.is_empty() {
        return;
    }
    out.push('\n');
    out.push_str(title);
    out.push(':');
    for item in items {
        out.push_str("\n- ");
        out.push_str(item);
    }
}

fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return text,
                Some((_, next)) if next.is_whitespace() => return &text[..i + c.len_utf8()],
                _ => {}
            }
        }
    }
    text
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyOverlay {
    pub text: String,
    #[serde(default)]
    pub token_cost: u64,
}

impl SafetyOverlay {
    pub fn new(text: impl Into<String>, counter: &dyn TokenCounter) -> Self {
        let text = text.into();
        SafetyOverlay {
            token_cost: counter.count(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeAction {
    Add,
    Update,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeLogEntry {
    pub timestamp: i64,
    pub id: String,
    pub action: ChangeAction,
}

/// Content hash over fragments, tools, overlay and routing note.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorpusVersion(pub String);

impl fmt::Display for CorpusVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub fragments: Vec<InstructionFragment>,
    pub tools: Vec<ToolSpec>,
    pub safety_overlay: Option<SafetyOverlay>,
    pub routing_note: String,
    pub version: CorpusVersion,
    pub change_log: Vec<ChangeLogEntry>,
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus::new(Vec::new(), Vec::new(), None)
    }
}

impl Corpus {
    /// Builds a corpus as given. Token costs are taken verbatim; use
    /// [`Corpus::recount`] to recompute them with a counter.
    pub fn new(
        fragments: Vec<InstructionFragment>,
        tools: Vec<ToolSpec>,
        safety_overlay: Option<SafetyOverlay>,
    ) -> Self {
        let mut corpus = Corpus {
            fragments,
            tools,
            safety_overlay,
            routing_note: DEFAULT_ROUTING_NOTE.to_string(),
            version: CorpusVersion(String::new()),
            change_log: Vec::new(),
        };
        corpus.version = corpus.compute_version();
        corpus
    }

    pub fn with_routing_note(mut self, note: impl Into<String>) -> Self {
        self.routing_note = note.into();
        self.version = self.compute_version();
        self
    }

    /// Recomputes every token cost with `counter`.
    pub fn recount(mut self, counter: &dyn TokenCounter) -> Self {
        for f in &mut self.fragments {
            f.token_cost = counter.count(&f.text);
        }
        for t in &mut self.tools {
            t.token_cost = counter.count(&t.render());
        }
        if let Some(o) = &mut self.safety_overlay {
            o.token_cost = counter.count(&o.text);
        }
        self.version = self.compute_version();
        self
    }

    pub fn compute_version(&self) -> CorpusVersion {
        let mut hasher = Sha256::new();
        for f in &self.fragments {
            hash_field(&mut hasher, "fragment");
            hash_field(&mut hasher, &f.id);
            hash_field(&mut hasher, &f.text);
            hash_field(&mut hasher, &f.domain);
            hash_field(&mut hasher, &format!("{:?}|{}|{}|{}", f.policy_type, f.priority, f.recency, f.pinned));
        }
        for t in &self.tools {
            hash_field(&mut hasher, "tool");
            hash_field(&mut hasher, &t.id);
            hash_field(&mut hasher, &t.render());
            hash_field(&mut hasher, &t.domain);
            hash_field(&mut hasher, &format!("{}|{}", t.pinned, t.exemplars.len()));
            for e in &t.exemplars {
                hash_field(&mut hasher, e);
            }
        }
        hash_field(&mut hasher, "overlay");
        if let Some(o) = &self.safety_overlay {
            hash_field(&mut hasher, &o.text);
        }
        hash_field(&mut hasher, "routing_note");
        hash_field(&mut hasher, &self.routing_note);
        CorpusVersion(hex::encode(&hasher.finalize()[..16]))
    }

    pub fn fragment(&self, id: &str) -> Option<&InstructionFragment> {
        self.fragments.iter().find(|f| f.id == id)
    }

    pub fn tool(&self, id: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.id == id)
    }

    pub fn total_instruction_tokens(&self) -> u64 {
        self.fragments.iter().map(|f| f.token_cost).sum()
    }

    pub fn total_tool_tokens(&self) -> u64 {
        self.tools.iter().map(|t| t.token_cost).sum()
    }

    /// Inserts or replaces a fragment, returning the new corpus.
    pub fn upsert_fragment(&self, fragment: InstructionFragment, timestamp: i64) -> Corpus {
        let mut next = self.clone();
        let action = match next.fragments.iter_mut().find(|f| f.id == fragment.id) {
            Some(slot) => {
                *slot = fragment.clone();
                ChangeAction::Update
            }
            None => {
                next.fragments.push(fragment.clone());
                ChangeAction::Add
            }
        };
        next.finish_edit(fragment.id, action, timestamp)
    }

    pub fn upsert_tool(&self, tool: ToolSpec, timestamp: i64) -> Corpus {
        let mut next = self.clone();
        let action = match next.tools.iter_mut().find(|t| t.id == tool.id) {
            Some(slot) => {
                *slot = tool.clone();
                ChangeAction::Update
            }
            None => {
                next.tools.push(tool.clone());
                ChangeAction::Add
            }
        };
        next.finish_edit(tool.id, action, timestamp)
    }

    /// Removes a fragment or tool by id. Unknown ids leave the corpus as is.
    pub fn remove(&self, id: &str, timestamp: i64) -> Corpus {
        let mut next = self.clone();
        let before = next.fragments.len() + next.tools.len();
        next.fragments.retain(|f| f.id != id);
        next.tools.retain(|t| t.id != id);
        if next.fragments.len() + next.tools.len() == before {
            return next;
        }
        next.finish_edit(id.to_string(), ChangeAction::Remove, timestamp)
    }

    pub fn set_overlay(&self, overlay: SafetyOverlay, timestamp: i64) -> Corpus {
        let mut next = self.clone();
        let action = if next.safety_overlay.is_some() {
            ChangeAction::Update
        } else {
            ChangeAction::Add
        };
        next.safety_overlay = Some(overlay);
        next.finish_edit("safety_overlay".to_string(), action, timestamp)
    }

    fn finish_edit(mut self, id: String, action: ChangeAction, timestamp: i64) -> Corpus {
        self.change_log.push(ChangeLogEntry { timestamp, id, action });
        self.version = self.compute_version();
        self
    }
}

fn hash_field(hasher: &mut Sha256, field: &str) {
    hasher.update((field.len() as u64).to_le_bytes());
    hasher.update(field.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::QuarterCharCounter;

    fn tool(id: &str) -> ToolSpec {
        ToolSpec {
            id: id.into(),
            name: format!("{id}_name"),
            description: "Looks things up. Second sentence.".into(),
            argument_schema: "{\"q\": \"string\"}".into(),
            preconditions: vec!["index exists".into()],
            postconditions: vec![],
            failure_modes: vec!["timeout".into()],
            exemplars: vec!["one".into(), "two".into(), "three".into()],
            token_cost: 0,
            pinned: false,
            domain: "crm".into(),
        }
        .with_cost(&QuarterCharCounter)
    }

    #[test]
    fn render_caps_exemplars_at_two() {
        let rendered = tool("t1").render();
        assert!(rendered.contains("- one"));
        assert!(rendered.contains("- two"));
        assert!(!rendered.contains("three"));
        assert!(!rendered.contains("Postconditions"));
    }

    #[test]
    fn summary_line_uses_first_sentence() {
        assert_eq!(tool("t1").summary_line(), "- t1_name: Looks things up.");
        assert_eq!(first_sentence("v1.2 is out"), "v1.2 is out");
    }

    #[test]
    fn version_tracks_content_edits() {
        let c = QuarterCharCounter;
        let base = Corpus::new(vec![InstructionFragment::new("a", "be concise", &c)], vec![tool("t1")], None);
        assert_eq!(base.version, base.compute_version());
        assert_eq!(base.version, base.clone().recount(&c).version);

        let edited = base.upsert_fragment(InstructionFragment::new("a", "be concise!", &c), 1);
        assert_ne!(edited.version, base.version);
        assert_eq!(edited.change_log.len(), 1);
        assert_eq!(edited.change_log[0].action, ChangeAction::Update);

        let with_overlay = base.set_overlay(SafetyOverlay::new("no harm", &c), 2);
        assert_ne!(with_overlay.version, base.version);

        let removed = base.remove("t1", 3);
        assert!(removed.tools.is_empty());
        assert_ne!(removed.version, base.version);
        assert_eq!(base.remove("nope", 3).version, base.version);
    }
}
