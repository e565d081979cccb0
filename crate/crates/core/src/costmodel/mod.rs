//! Closed-form token, cost and hazard arithmetic.
//!
//! Per-step prompt tokens are `U_t + static`, where `static` is the full
//! instruction and tool corpus for a monolithic prompt and only the selected
//! subset under retrieval. History grows linearly: `U_t = U_1 + h·(t−1)`.

mod consistency;
mod hazard;

pub use consistency::{consistency_report, ConsistencyCheck, CATALOG_ACCURACY};
pub use hazard::{p_correct_itr, p_correct_mono, recall_crossover, HazardError, HazardParams};

use serde::{Deserialize, Serialize};

pub const DEFAULT_WINDOW: u64 = 1_000_000;
pub const DEFAULT_HISTORY_GROWTH: u64 = 2_000;
/// Per-loop increment that reproduces the 10-loop breakdown (30k at loop 1,
/// 50k at loop 10, i.e. 20k over nine steps, rounded to whole tokens).
pub const ALT_HISTORY_GROWTH: u64 = 2_222;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Total instruction tokens.
    pub s: u64,
    /// Total tool tokens.
    pub t_all: u64,
    /// Selected instruction tokens.
    pub s_ka: u64,
    /// Selected tool tokens.
    pub t_kb: u64,
    /// History growth per step.
    pub h: u64,
    /// History tokens at step 1.
    pub u1: u64,
    /// Currency per 1K input tokens.
    pub input_rate: f64,
    /// Currency per 1K output tokens.
    pub output_rate: f64,
}

impl CostParams {
    /// The 30k monolithic / 1.5k retrieved reference setting with 2k history
    /// growth per step.
    pub fn reference() -> Self {
        CostParams {
            s: 20_000,
            t_all: 10_000,
            s_ka: 1_280,
            t_kb: 220,
            h: DEFAULT_HISTORY_GROWTH,
            u1: 0,
            input_rate: 0.0,
            output_rate: 0.0,
        }
    }

    pub fn with_history_growth(self, h: u64) -> Self {
        CostParams { h, ..self }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.s_ka > self.s || self.t_kb > self.t_all {
            return Err("selected tokens exceed the corpus totals".into());
        }
        if !(self.input_rate >= 0.0 && self.output_rate >= 0.0) {
            return Err("rates must be non-negative".into());
        }
        Ok(())
    }

    pub fn static_tokens(&self, mode: PromptMode) -> u64 {
        match mode {
            PromptMode::Mono => self.s + self.t_all,
            PromptMode::Itr => self.s_ka + self.t_kb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Mono,
    Itr,
}

/// `U + S + T_all`
pub fn tok_mono(u: u64, s: u64, t_all: u64) -> u64 {
    u + s + t_all
}

/// `U + S_KA + T_KB`
pub fn tok_itr(u: u64, s_ka: u64, t_kb: u64) -> u64 {
    u + s_ka + t_kb
}

/// History tokens at step `t` (1-based).
pub fn history_at(t: u64, u1: u64, h: u64) -> u64 {
    u1 + h * t.saturating_sub(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTotals {
    pub per_step: Vec<u64>,
    /// Running total; `cumulative[i]` covers steps `1..=i+1`.
    pub cumulative: Vec<u64>,
    pub total: u64,
}

pub fn episode_totals(l: u64, params: &CostParams, mode: PromptMode) -> EpisodeTotals {
    let fixed = params.static_tokens(mode);
    let per_step: Vec<u64> = (1..=l).map(|t| fixed + history_at(t, params.u1, params.h)).collect();
    let cumulative: Vec<u64> = per_step
        .iter()
        .scan(0u64, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let total = cumulative.last().copied().unwrap_or(0);
    EpisodeTotals {
        per_step,
        cumulative,
        total,
    }
}

/// `L·(static_mono − static_itr)`; history cancels.
pub fn episode_savings(l: u64, params: &CostParams) -> u64 {
    l * (params.static_tokens(PromptMode::Mono) - params.static_tokens(PromptMode::Itr))
}

/// Spend for `input` and `output` tokens at the configured per-1K rates.
pub fn token_cost(input: u64, output: u64, params: &CostParams) -> f64 {
    input as f64 / 1000.0 * params.input_rate + output as f64 / 1000.0 * params.output_rate
}

/// Steps that fit in `window` when every step re-sends `static_tokens` and
/// each step adds `h` history: `floor((window − static) / h)`, floored at 0.
pub fn max_loops(window: u64, static_tokens: u64, h: u64) -> u64 {
    assert!(h > 0, "history growth must be positive");
    window.saturating_sub(static_tokens) / h
}

/// Rows of the max-loops table: label and monolithic static tokens.
pub const MAX_LOOPS_ROWS: [(&str, u64); 5] = [
    ("50 instr + 30 tools", 40_000),
    ("150 instr + 100 tools", 110_000),
    ("300 instr + 200 tools", 220_000),
    ("500 instr + 400 tools", 400_000),
    ("800 instr + 600 tools", 620_000),
];
pub const ITR_STATIC_TOKENS: u64 = 1_500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxLoopsRow {
    pub corpus: String,
    pub static_tokens: u64,
    pub mono_max_loops: u64,
    pub itr_max_loops: u64,
}

pub fn max_loops_table(window: u64, itr_static: u64, h: u64) -> Vec<MaxLoopsRow> {
    MAX_LOOPS_ROWS
        .iter()
        .map(|&(label, static_tokens)| MaxLoopsRow {
            corpus: label.to_string(),
            static_tokens,
            mono_max_loops: max_loops(window, static_tokens, h),
            itr_max_loops: max_loops(window, itr_static, h),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundingRow {
    pub step: u64,
    pub mono_step: u64,
    pub itr_step: u64,
    pub mono_cumulative: u64,
    pub itr_cumulative: u64,
    pub step_savings: u64,
    /// Share of the monolithic step saved.
    pub step_savings_pct: f64,
}

pub fn compounding_series(l: u64, params: &CostParams) -> Vec<CompoundingRow> {
    let mono = episode_totals(l, params, PromptMode::Mono);
    let itr = episode_totals(l, params, PromptMode::Itr);
    (0..l as usize)
        .map(|i| {
            let saved = mono.per_step[i] - itr.per_step[i];
            CompoundingRow {
                step: i as u64 + 1,
                mono_step: mono.per_step[i],
                itr_step: itr.per_step[i],
                mono_cumulative: mono.cumulative[i],
                itr_cumulative: itr.cumulative[i],
                step_savings: saved,
                step_savings_pct: if mono.per_step[i] == 0 {
                    0.0
                } else {
                    100.0 * saved as f64 / mono.per_step[i] as f64
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_step_sums() {
        assert_eq!(tok_mono(0, 18_000, 12_000), 30_000);
        assert_eq!(tok_itr(0, 1_280, 220), 1_500);
        assert_eq!(tok_mono(2_000, 20_000, 10_000), 32_000);
    }

    #[test]
    fn ten_step_episode() {
        let p = CostParams::reference();
        assert_eq!(episode_totals(10, &p, PromptMode::Mono).total, 390_000);
        assert_eq!(episode_totals(10, &p, PromptMode::Itr).total, 105_000);
        assert_eq!(episode_savings(10, &p), 285_000);
        assert_eq!(episode_totals(0, &p, PromptMode::Mono).total, 0);
    }

    #[test]
    fn max_loops_edges() {
        assert_eq!(max_loops(1_000_000, 40_000, 2_000), 480);
        assert_eq!(max_loops(1_000_000, 1_500, 2_000), 499);
        assert_eq!(max_loops(5_000, 5_000, 2_000), 0);
        assert_eq!(max_loops(5_000, 9_000, 2_000), 0);
    }

    #[test]
    fn alternate_growth_matches_ten_loop_breakdown() {
        let p = CostParams::reference().with_history_growth(ALT_HISTORY_GROWTH);
        let rows = compounding_series(10, &p);
        // Displayed in thousands to one decimal.
        let k = |x: u64| (x as f64 / 100.0).round() / 10.0;
        assert_eq!((k(rows[4].mono_step), k(rows[4].itr_step)), (38.9, 10.4));
        assert_eq!((k(rows[9].mono_step), k(rows[9].itr_step)), (50.0, 21.5));
        assert!(rows.iter().all(|r| r.step_savings == 28_500));
        assert_eq!(format!("{:.1}", rows[9].step_savings_pct), "57.0");
        assert_eq!(format!("{:.1}", rows[0].step_savings_pct), "95.0");
    }

    #[test]
    fn token_cost_rates() {
        let p = CostParams {
            input_rate: 0.01,
            output_rate: 0.03,
            ..CostParams::reference()
        };
        assert!((token_cost(30_000, 1_000, &p) - 0.33).abs() < 1e-12);
    }
}
