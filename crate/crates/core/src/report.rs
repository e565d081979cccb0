//! Aligned-text and JSON tables for cost-model and simulation output.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costmodel::{CompoundingRow, ConsistencyCheck, MaxLoopsRow};
use crate::sim::{MetricsTable, PolicyKind};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReportError {
    #[error("unknown report format {0:?} (expected text or json)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: &str, headers: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// First column left-aligned, the rest right-aligned.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut out = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(out, "{cell:<w$}");
                } else {
                    let _ = write!(out, "{cell:>w$}");
                }
            }
            out.trim_end().to_string()
        };
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        out.push_str(&line(&self.headers));
        out.push('\n');
        let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    /// Rows as arrays aligned with `columns`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "title": self.title, "columns": self.headers, "rows": self.rows })
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.to_text(),
            ReportFormat::Json => serde_json::to_string_pretty(&self.to_json()).expect("table serializes"),
        }
    }
}

/// Several tables in one document.
pub fn render_all(tables: &[Table], format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => tables.iter().map(Table::to_text).collect::<Vec<_>>().join("\n"),
        ReportFormat::Json => {
            let v: Vec<serde_json::Value> = tables.iter().map(Table::to_json).collect();
            serde_json::to_string_pretty(&v).expect("tables serialize")
        }
    }
}

/// Tokens in thousands: `30` for 30,000, `1.5` for 1,500, `38.9` for 38,886.
pub fn kilo(tokens: u64) -> String {
    if tokens.is_multiple_of(1000) {
        return (tokens / 1000).to_string();
    }
    let s = format!("{:.1}", tokens as f64 / 1000.0);
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn max_loops_report(rows: &[MaxLoopsRow]) -> Table {
    let mut t = Table::new(
        "Maximum viable agent loops",
        &["Corpus Size", "Static Tokens", "Mono Max Loops", "ITR Max Loops"],
    );
    for r in rows {
        t.push(vec![
            r.corpus.clone(),
            format!("{}K", kilo(r.static_tokens)),
            r.mono_max_loops.to_string(),
            r.itr_max_loops.to_string(),
        ]);
    }
    t
}

/// Cumulative context in thousands of tokens per step, as plotted.
pub fn compounding_report(rows: &[CompoundingRow]) -> Table {
    let mut t = Table::new(
        "Cumulative context tokens (K)",
        &["Step", "B0 Cumulative", "ITR Cumulative", "B0 Step", "ITR Step", "Step Savings (%)"],
    );
    for r in rows {
        t.push(vec![
            r.step.to_string(),
            kilo(r.mono_cumulative),
            kilo(r.itr_cumulative),
            kilo(r.mono_step),
            kilo(r.itr_step),
            format!("{:.1}", r.step_savings_pct),
        ]);
    }
    t
}

pub fn consistency_table(checks: &[ConsistencyCheck]) -> Table {
    let mut t = Table::new("Consistency checks", &["Check", "Computed", "Reported", "Result", "Detail"]);
    for c in checks {
        t.push(vec![
            c.name.clone(),
            c.computed.clone(),
            c.reported.clone(),
            if c.pass { "pass" } else { "FAIL" }.to_string(),
            c.detail.clone(),
        ]);
    }
    t
}

/// Per-step and episode metrics, one row per (policy, catalog size).
pub fn metrics_report(m: &MetricsTable) -> Table {
    let mut t = Table::new(
        &format!("Simulation results: {}", m.scenario),
        &[
            "Method",
            "# Tools",
            "Tokens/Step",
            "Static/Step",
            "Tools-Correct (%)",
            "95% CI",
            "Recall (%)",
            "API-Success (%)",
            "Miss-Rate (%)",
            "Fallback (%)",
            "Cost/Episode",
        ],
    );
    for r in &m.rows {
        t.push(vec![
            r.policy.label().to_string(),
            r.catalog_size.to_string(),
            thousands(r.ctx_per_step.round() as u64),
            thousands(r.static_per_step.round() as u64),
            format!("{:.1}", r.tools_correct.mean),
            format!("[{:.1}, {:.1}]", r.tools_correct.low, r.tools_correct.high),
            format!("{:.1}", r.recall),
            format!("{:.1}", r.api_success),
            format!("{:.1}", r.miss_rate.mean),
            format!("{:.1}", r.fallback_rate),
            format!("{:.2}", r.cost),
        ]);
    }
    t
}

/// B0 against ITR tools-correct by catalog size.
pub fn catalog_scaling_report(m: &MetricsTable) -> Table {
    let mut t = Table::new(
        "Tool routing accuracy vs. catalog size",
        &["# Tools", "B0 Tools-Correct (%)", "ITR Tools-Correct (%)", "Absolute Gain (pp)", "95% CI"],
    );
    let mut sizes: Vec<usize> = m.rows.iter().map(|r| r.catalog_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for n in sizes {
        let (Some(b0), Some(itr)) = (m.row(PolicyKind::B0Monolithic, n), m.row(PolicyKind::Itr, n)) else {
            continue;
        };
        let ci = m
            .comparison("tools_correct", PolicyKind::Itr, n)
            .map(|c| format!("[{:+.1}, {:+.1}]", c.diff.low, c.diff.high))
            .unwrap_or_default();
        t.push(vec![
            n.to_string(),
            format!("{:.1}", b0.tools_correct.mean),
            format!("{:.1}", itr.tools_correct.mean),
            format!("{:+.1}", itr.tools_correct.mean - b0.tools_correct.mean),
            ci,
        ]);
    }
    t
}

pub fn mixed_report(m: &MetricsTable) -> Table {
    let mut t = Table::new("Mixed catalog", &["Method", "Tokens/Step", "Tools-Correct (%)"]);
    for r in &m.mixed {
        t.push(vec![
            r.policy.label().to_string(),
            thousands(r.ctx_per_step.round() as u64),
            format!("{:.1}", r.tools_correct),
        ]);
    }
    t
}
