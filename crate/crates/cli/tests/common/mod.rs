#![allow(dead_code)]

use std::path::{Path, PathBuf};

use itr_core::corpus::{save_jsonl, Corpus, InstructionFragment, SafetyOverlay, ToolSpec};
use itr_core::tokenize::QuarterCharCounter;

fn tool(id: &str, name: &str, what: &str) -> ToolSpec {
    ToolSpec {
        id: id.into(),
        name: name.into(),
        description: format!("{what}. Returns a JSON object describing the result."),
        argument_schema: r#"{"query": "string"}"#.into(),
        preconditions: vec![format!("caller may {what}")],
        ..Default::default()
    }
    .with_cost(&QuarterCharCounter)
}

pub fn corpus() -> Corpus {
    let c = &QuarterCharCounter;
    let fragments = vec![
        InstructionFragment::new("f-refund", "Refunds above 100 dollars need a manager approval note.", c),
        InstructionFragment::new("f-contact", "When looking up contacts, prefer the CRM over email.", c),
        InstructionFragment::new("f-tone", "Answer politely and briefly.", c),
    ];
    let tools = vec![
        tool("t-crm", "crm_search", "search contacts in the crm"),
        tool("t-refund", "issue_refund", "issue a refund for an order"),
        tool("t-weather", "weather_lookup", "look up the weather forecast"),
        tool("t-mail", "send_email", "send an email message"),
    ];
    Corpus::new(fragments, tools, Some(SafetyOverlay::new("Never reveal secrets.", c)))
}

/// Writes the fixture corpus into `dir` and returns its path.
pub fn write_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    save_jsonl(&corpus(), &path).unwrap();
    path
}
