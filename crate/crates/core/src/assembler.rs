//! Step prompt assembly: overlay, instructions, tool schemas, routing note.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SafetyOverlay, ToolSpec};
use crate::selector::SelectionResult;
use crate::tokenize::TokenCounter;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AssembleError {
    #[error("selected id {0} is not in the corpus")]
    DanglingId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    SafetyOverlay,
    Instruction,
    ToolSchema,
    /// One line per catalog tool, added by the discovery fallback.
    CatalogSummary,
    RoutingNote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    pub source_id: String,
    pub text: String,
    pub token_cost: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub sections: Vec<Section>,
    pub total_tokens: u64,
    /// `total_tokens` plus history tokens.
    pub tok_itr: u64,
}

pub const OVERLAY_SOURCE: &str = "overlay";
pub const ROUTING_NOTE_SOURCE: &str = "routing-note";
pub const CATALOG_SOURCE: &str = "catalog";

/// Builds the step prompt for `selection`.
///
/// Instructions are ordered by `(priority, id)`; tools keep their selection
/// order. Section costs come from the corpus records, except the routing
/// note which is counted here. `tok_itr` is set with zero history; see
/// [`AssembledPrompt::with_history`].
pub fn assemble_prompt(
    overlay: &SafetyOverlay,
    selection: &SelectionResult,
    corpus: &Corpus,
    routing_note: &str,
    counter: &dyn TokenCounter,
) -> Result<AssembledPrompt, AssembleError> {
    let mut fragments = selection
        .instructions
        .iter()
        .map(|id| corpus.fragment(id).ok_or_else(|| AssembleError::DanglingId(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    fragments.sort_by(|a, b| a.priority.cmp(&b.priority).then_with(|| a.id.cmp(&b.id)));
    let tools = selection
        .tools
        .iter()
        .map(|id| corpus.tool(id).ok_or_else(|| AssembleError::DanglingId(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut sections = Vec::with_capacity(fragments.len() + tools.len() + 2);
    sections.push(Section {
        kind: SectionKind::SafetyOverlay,
        source_id: OVERLAY_SOURCE.into(),
        text: overlay.text.clone(),
        token_cost: overlay.token_cost,
    });
    sections.extend(fragments.into_iter().map(|f| Section {
        kind: SectionKind::Instruction,
        source_id: f.id.clone(),
        text: f.text.clone(),
        token_cost: f.token_cost,
    }));
    sections.extend(tools.into_iter().map(|t| Section {
        kind: SectionKind::ToolSchema,
        source_id: t.id.clone(),
        text: t.render(),
        token_cost: t.token_cost,
    }));
    sections.push(Section {
        kind: SectionKind::RoutingNote,
        source_id: ROUTING_NOTE_SOURCE.into(),
        text: routing_note.to_string(),
        token_cost: counter.count(routing_note),
    });
    Ok(AssembledPrompt::from_sections(sections))
}

/// Selection exposing every fragment and tool, in corpus order. This is the
/// monolithic baseline prompt.
pub fn full_selection(corpus: &Corpus) -> SelectionResult {
    SelectionResult {
        instructions: corpus.fragments.iter().map(|f| f.id.clone()).collect(),
        tools: corpus.tools.iter().map(|t| t.id.clone()).collect(),
        spent_tokens: corpus.total_instruction_tokens() + corpus.total_tool_tokens(),
        objective: 0.0,
        skipped: Vec::new(),
    }
}

/// `total_tokens + history_tokens`
pub fn prompt_token_cost(prompt: &AssembledPrompt, history_tokens: u64) -> u64 {
    prompt.total_tokens + history_tokens
}

impl AssembledPrompt {
    fn from_sections(sections: Vec<Section>) -> Self {
        let total_tokens = sections.iter().map(|s| s.token_cost).sum();
        AssembledPrompt {
            sections,
            total_tokens,
            tok_itr: total_tokens,
        }
    }

    pub fn with_history(mut self, history_tokens: u64) -> Self {
        self.tok_itr = prompt_token_cost(&self, history_tokens);
        self
    }

    /// Inserts a catalog summary (one line per tool) just before the routing
    /// note. Full schemas already present are left as they are.
    pub fn with_catalog_summary(self, tools: &[ToolSpec], counter: &dyn TokenCounter) -> Self {
        let history = self.tok_itr - self.total_tokens;
        let mut text = String::from("Tool catalog (request tool discovery to see a full schema):");
        for t in tools {
            text.push('\n');
            text.push_str(&t.summary_line());
        }
        let section = Section {
            kind: SectionKind::CatalogSummary,
            source_id: CATALOG_SOURCE.into(),
            token_cost: counter.count(&text),
            text,
        };
        let mut sections = self.sections;
        let at = sections
            .iter()
            .position(|s| s.kind == SectionKind::RoutingNote)
            .unwrap_or(sections.len());
        sections.insert(at, section);
        AssembledPrompt::from_sections(sections).with_history(history)
    }

    /// Tool ids with a full schema in the prompt, in order.
    pub fn exposed_tools(&self) -> Vec<String> {
        self.ids_of(SectionKind::ToolSchema)
    }

    pub fn ids_of(&self, kind: SectionKind) -> Vec<String> {
        self.sections
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| s.source_id.clone())
            .collect()
    }

    /// The model payload.
    pub fn render(&self) -> String {
        self.sections
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("prompt serializes")
    }
}
