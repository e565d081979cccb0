//! Budget-aware selection of instruction fragments and tools.
//!
//! The production path is [`greedy_select`]: pinned items first, then every
//! remaining candidate of both kinds in order of gain per token, skipping
//! whatever does not fit the remaining budget or its per-kind cap.
//! [`knapsack_oracle`] solves the same problem exactly by enumeration and
//! exists to check the greedy path on small instances.

mod oracle;

pub use oracle::{knapsack_oracle, ORACLE_MAX_CANDIDATES};

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::index::{DocKind, ScoredCandidate};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectError {
    #[error("pinned items need {pinned_tokens} tokens but the budget is {budget}")]
    PinnedOverflow { pinned_tokens: u64, budget: u64 },
    #[error("{count} pinned {kind:?} items exceed the cap of {cap}")]
    PinnedOverCap { kind: DocKind, count: usize, cap: usize },
    #[error("pinned id {0} is not among the candidates")]
    UnknownPinned(String),
    #[error("{count} candidates exceed the enumeration bound of {limit}")]
    TooManyCandidates { count: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Tokens available for selected fragments and tool schemas. The overlay,
    /// routing note and history are outside this budget.
    pub budget: u64,
    /// `K_A`
    pub max_instructions: usize,
    /// `K_B`
    pub max_tools: usize,
    /// Prefer tools over instructions when gain per token and gain tie.
    pub recall_first: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            budget: 1_500,
            max_instructions: 4,
            max_tools: 2,
            recall_first: true,
        }
    }
}

impl SelectionConfig {
    fn cap(&self, kind: DocKind) -> usize {
        match kind {
            DocKind::Instruction => self.max_instructions,
            DocKind::Tool => self.max_tools,
        }
    }
}

/// A candidate as the selector sees it: marginal gain and token cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCandidate {
    pub id: String,
    pub kind: DocKind,
    /// Estimated marginal gain; non-negative.
    pub gain: f64,
    pub token_cost: u64,
}

impl SelectionCandidate {
    pub fn new(id: impl Into<String>, kind: DocKind, gain: f64, token_cost: u64) -> Self {
        SelectionCandidate {
            id: id.into(),
            kind,
            gain: gain.max(0.0),
            token_cost,
        }
    }

    fn density(&self) -> f64 {
        if self.token_cost == 0 {
            f64::INFINITY
        } else {
            self.gain / self.token_cost as f64
        }
    }
}

/// Default gain estimate: the (re-ranked) hybrid score, floored at zero.
impl From<&ScoredCandidate> for SelectionCandidate {
    fn from(c: &ScoredCandidate) -> Self {
        SelectionCandidate::new(c.id.clone(), c.kind, c.hybrid, c.token_cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    OverBudget,
    CapReached,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionResult {
    pub instructions: Vec<String>,
    pub tools: Vec<String>,
    pub spent_tokens: u64,
    pub objective: f64,
    pub skipped: Vec<Skipped>,
}

impl SelectionResult {
    pub fn contains(&self, id: &str) -> bool {
        self.instructions.iter().chain(&self.tools).any(|x| x == id)
    }
}

/// Running totals shared by the greedy pass and the oracle.
#[derive(Default)]
struct Tally {
    result: SelectionResult,
}

impl Tally {
    fn count(&self, kind: DocKind) -> usize {
        match kind {
            DocKind::Instruction => self.result.instructions.len(),
            DocKind::Tool => self.result.tools.len(),
        }
    }

    fn take(&mut self, c: &SelectionCandidate) {
        match c.kind {
            DocKind::Instruction => self.result.instructions.push(c.id.clone()),
            DocKind::Tool => self.result.tools.push(c.id.clone()),
        }
        self.result.spent_tokens += c.token_cost;
        self.result.objective += c.gain;
    }
}

/// Splits the merged pool into pinned and free candidates, checking that
/// every pinned id is present and that pinned items alone fit caps and
/// budget. Duplicate ids keep their first occurrence.
fn partition_pinned<'a>(
    instructions: &'a [SelectionCandidate],
    tools: &'a [SelectionCandidate],
    config: &SelectionConfig,
    pinned_ids: &BTreeSet<String>,
) -> Result<(Vec<&'a SelectionCandidate>, Vec<&'a SelectionCandidate>), SelectError> {
    let mut seen = BTreeSet::new();
    let mut pinned = Vec::new();
    let mut free = Vec::new();
    for c in tools.iter().chain(instructions) {
        if !seen.insert(c.id.as_str()) {
            continue;
        }
        if pinned_ids.contains(&c.id) {
            pinned.push(c);
        } else {
            free.push(c);
        }
    }
    if let Some(missing) = pinned_ids.iter().find(|id| !seen.contains(id.as_str())) {
        return Err(SelectError::UnknownPinned(missing.clone()));
    }
    for kind in [DocKind::Tool, DocKind::Instruction] {
        let count = pinned.iter().filter(|c| c.kind == kind).count();
        if count > config.cap(kind) {
            return Err(SelectError::PinnedOverCap {
                kind,
                count,
                cap: config.cap(kind),
            });
        }
    }
    let pinned_tokens: u64 = pinned.iter().map(|c| c.token_cost).sum();
    if pinned_tokens > config.budget {
        return Err(SelectError::PinnedOverflow {
            pinned_tokens,
            budget: config.budget,
        });
    }
    Ok((pinned, free))
}

/// Greedy selection by gain per token.
///
/// 1. Pinned candidates are included unconditionally and their tokens
///    reserved.
/// 2. The remaining candidates of both kinds are merged and sorted by gain
///    per token descending (ties: higher gain, then tools first when
///    `recall_first`, then ascending id).
/// 3. Each candidate is taken if it fits the remaining budget and its
///    kind's cap; otherwise it is recorded as skipped and the scan
///    continues.
pub fn greedy_select(
    instructions: &[SelectionCandidate],
    tools: &[SelectionCandidate],
    config: &SelectionConfig,
    pinned_ids: &BTreeSet<String>,
) -> Result<SelectionResult, SelectError> {
    let (pinned, mut free) = partition_pinned(instructions, tools, config, pinned_ids)?;
    let mut tally = Tally::default();
    for c in pinned {
        tally.take(c);
    }

    free.sort_by(|a, b| greedy_order(a, b, config.recall_first));
    for c in free {
        if tally.count(c.kind) >= config.cap(c.kind) {
            tally.result.skipped.push(Skipped {
                id: c.id.clone(),
                reason: SkipReason::CapReached,
            });
        } else if tally.result.spent_tokens + c.token_cost > config.budget {
            tally.result.skipped.push(Skipped {
                id: c.id.clone(),
                reason: SkipReason::OverBudget,
            });
        } else {
            tally.take(c);
        }
    }
    Ok(tally.result)
}

fn greedy_order(a: &SelectionCandidate, b: &SelectionCandidate, recall_first: bool) -> Ordering {
    b.density()
        .total_cmp(&a.density())
        .then_with(|| b.gain.total_cmp(&a.gain))
        .then_with(|| {
            if recall_first {
                // Tool sorts before Instruction.
                b.kind.cmp(&a.kind)
            } else {
                Ordering::Equal
            }
        })
        .then_with(|| a.id.cmp(&b.id))
}
