//! Sufficiency gate, discovery fallback and the model-client contract.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::assembler::AssembledPrompt;
use crate::selector::{greedy_select, SelectError, SelectionCandidate, SelectionConfig, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Proceed,
    Fallback,
}

/// Fallback iff `confidence < tau`.
pub fn sufficiency_gate(confidence: f64, tau: f64) -> GateDecision {
    if confidence < tau {
        GateDecision::Fallback
    } else {
        GateDecision::Proceed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryPolicy {
    /// Double `K_B` and admit the next-ranked tools.
    #[default]
    ExpandKb,
    /// Keep the selection and add one summary line per catalog tool.
    CatalogSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub tau: f64,
    pub discovery_policy: DiscoveryPolicy,
    pub max_fallbacks: u32,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            tau: 0.5,
            discovery_policy: DiscoveryPolicy::ExpandKb,
            max_fallbacks: 1,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(GateError::InvalidTau(self.tau));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GateError {
    #[error("tau {0} is outside [0, 1]")]
    InvalidTau(f64),
    #[error("fallback budget of {0} exhausted")]
    FallbacksExhausted(u32),
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// Result of one discovery sub-step.
#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    pub selection: SelectionResult,
    /// Set under [`DiscoveryPolicy::CatalogSummary`].
    pub catalog_summary: bool,
    pub selection_config: SelectionConfig,
}

/// Widens the tool exposure after a low-confidence reply.
///
/// Under `ExpandKb` every previously selected item is pinned, `K_B` is
/// doubled, and the budget grows by the cost of the next-ranked tools that
/// the doubled cap admits (`tool_candidates` are taken to be in rank order).
/// Greedy selection then reruns over the prior instructions and all tool
/// candidates, so only tools can be added. Under `CatalogSummary` the
/// selection is returned unchanged with the summary flag set.
pub fn expand_or_discover(
    prior: &SelectionResult,
    instruction_candidates: &[SelectionCandidate],
    tool_candidates: &[SelectionCandidate],
    selection_config: &SelectionConfig,
    gate: &GateConfig,
    fallbacks_used: u32,
) -> Result<Discovery, GateError> {
    if fallbacks_used >= gate.max_fallbacks {
        return Err(GateError::FallbacksExhausted(gate.max_fallbacks));
    }
    if gate.discovery_policy == DiscoveryPolicy::CatalogSummary {
        return Ok(Discovery {
            selection: prior.clone(),
            catalog_summary: true,
            selection_config: selection_config.clone(),
        });
    }

    let max_tools = (selection_config.max_tools * 2).max(1);
    let room = max_tools.saturating_sub(prior.tools.len());
    let extra_cost: u64 = tool_candidates
        .iter()
        .filter(|c| !prior.tools.contains(&c.id))
        .take(room)
        .map(|c| c.token_cost)
        .sum();
    let config = SelectionConfig {
        budget: selection_config.budget.max(prior.spent_tokens) + extra_cost,
        max_tools,
        max_instructions: selection_config.max_instructions.max(prior.instructions.len()),
        ..selection_config.clone()
    };
    let pinned: BTreeSet<String> = prior.instructions.iter().chain(&prior.tools).cloned().collect();
    let instructions: Vec<SelectionCandidate> = instruction_candidates
        .iter()
        .filter(|c| pinned.contains(&c.id))
        .cloned()
        .collect();
    let mut selection = greedy_select(&instructions, tool_candidates, &config, &pinned)?;
    // Keep the prior items in their original order at the front.
    selection.instructions = prior.instructions.clone();
    let added: Vec<String> = selection
        .tools
        .iter()
        .filter(|t| !prior.tools.contains(t))
        .cloned()
        .collect();
    selection.tools = prior.tools.iter().cloned().chain(added).collect();
    Ok(Discovery {
        selection,
        catalog_summary: false,
        selection_config: config,
    })
}

/// What the model returned for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReply {
    pub output: String,
    pub tool_call: Option<String>,
    /// Self-rated sufficiency in `[0, 1]`.
    pub confidence: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("model call failed: {0}")]
pub struct ModelError(pub String);

/// A language model behind the step loop. `exposed` lists the tools whose
/// full schemas are in the prompt.
pub trait ModelClient {
    fn call(&mut self, prompt: &AssembledPrompt, exposed: &[String], query: &str) -> Result<ModelReply, ModelError>;
}

/// Replays a fixed list of replies, then fails.
#[derive(Debug, Clone, Default)]
pub struct ScriptedModel {
    replies: VecDeque<ModelReply>,
    pub calls: Vec<Vec<String>>,
}

impl ScriptedModel {
    pub fn new(replies: impl IntoIterator<Item = ModelReply>) -> Self {
        ScriptedModel {
            replies: replies.into_iter().collect(),
            calls: Vec::new(),
        }
    }

    /// Replies calling the first exposed tool with each confidence in turn.
    pub fn with_confidences(confidences: &[f64]) -> Self {
        ScriptedModel::new(confidences.iter().map(|&c| ModelReply {
            output: String::new(),
            tool_call: None,
            confidence: c,
        }))
    }
}

impl ModelClient for ScriptedModel {
    fn call(&mut self, _prompt: &AssembledPrompt, exposed: &[String], _query: &str) -> Result<ModelReply, ModelError> {
        self.calls.push(exposed.to_vec());
        let mut reply = self
            .replies
            .pop_front()
            .ok_or_else(|| ModelError("script exhausted".into()))?;
        if reply.tool_call.is_none() {
            reply.tool_call = exposed.first().cloned();
        }
        Ok(reply)
    }
}

/// Calls the top exposed tool with a constant confidence.
#[derive(Debug, Clone, Copy)]
pub struct FixedModel {
    pub confidence: f64,
}

impl ModelClient for FixedModel {
    fn call(&mut self, _prompt: &AssembledPrompt, exposed: &[String], query: &str) -> Result<ModelReply, ModelError> {
        Ok(ModelReply {
            output: format!("handled: {query}"),
            tool_call: exposed.first().cloned(),
            confidence: self.confidence,
        })
    }
}
