//! Exact 0/1 knapsack with per-kind caps, by depth-first enumeration.

use std::collections::BTreeSet;

use super::{partition_pinned, SelectError, SelectionCandidate, SelectionConfig, SelectionResult, Tally};
use crate::index::DocKind;

/// Largest free (non-pinned) pool the oracle will enumerate.
pub const ORACLE_MAX_CANDIDATES: usize = 22;

/// Objectives closer than this (relative) are considered tied; ties go to
/// the lexicographically smallest sorted id set.
const TIE_EPS: f64 = 1e-12;

struct Search<'a> {
    items: Vec<&'a SelectionCandidate>,
    budget: u64,
    caps: [usize; 2],
    best: Option<(f64, Vec<usize>)>,
}

fn kind_slot(kind: DocKind) -> usize {
    match kind {
        DocKind::Instruction => 0,
        DocKind::Tool => 1,
    }
}

impl<'a> Search<'a> {
    fn run(&mut self, at: usize, spent: u64, counts: [usize; 2], gain: f64, chosen: &mut Vec<usize>) {
        if at == self.items.len() {
            self.offer(gain, chosen);
            return;
        }
        let c = self.items[at];
        let slot = kind_slot(c.kind);
        if spent + c.token_cost <= self.budget && counts[slot] < self.caps[slot] {
            let mut next = counts;
            next[slot] += 1;
            chosen.push(at);
            self.run(at + 1, spent + c.token_cost, next, gain + c.gain, chosen);
            chosen.pop();
        }
        self.run(at + 1, spent, counts, gain, chosen);
    }

    fn offer(&mut self, gain: f64, chosen: &[usize]) {
        let better = match &self.best {
            None => true,
            Some((best_gain, best_set)) => {
                let eps = TIE_EPS * best_gain.abs().max(1.0);
                if gain > best_gain + eps {
                    true
                } else if gain >= best_gain - eps {
                    self.ids(chosen) < self.ids(best_set)
                } else {
                    false
                }
            }
        };
        if better {
            self.best = Some((gain, chosen.to_vec()));
        }
    }

    fn ids(&self, set: &[usize]) -> Vec<&str> {
        let mut ids: Vec<&str> = set.iter().map(|&i| self.items[i].id.as_str()).collect();
        ids.sort_unstable();
        ids
    }
}

/// Optimal selection under the same constraints as
/// [`greedy_select`](super::greedy_select): pinned items forced in, budget,
/// and per-kind caps. Exponential in the number of free candidates, so it
/// refuses pools larger than [`ORACLE_MAX_CANDIDATES`].
pub fn knapsack_oracle(
    instructions: &[SelectionCandidate],
    tools: &[SelectionCandidate],
    config: &SelectionConfig,
    pinned_ids: &BTreeSet<String>,
) -> Result<SelectionResult, SelectError> {
    let (pinned, free) = partition_pinned(instructions, tools, config, pinned_ids)?;
    if free.len() > ORACLE_MAX_CANDIDATES {
        return Err(SelectError::TooManyCandidates {
            count: free.len(),
            limit: ORACLE_MAX_CANDIDATES,
        });
    }
    let mut tally = Tally::default();
    let mut counts = [0usize; 2];
    for c in &pinned {
        tally.take(c);
        counts[kind_slot(c.kind)] += 1;
    }

    let mut search = Search {
        items: free,
        budget: config.budget,
        caps: [config.max_instructions, config.max_tools],
        best: None,
    };
    search.run(0, tally.result.spent_tokens, counts, 0.0, &mut Vec::new());

    let (_, chosen) = search.best.unwrap_or_default();
    for &i in &chosen {
        tally.take(search.items[i]);
    }
    Ok(tally.result)
}
