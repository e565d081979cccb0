use std::collections::BTreeMap;
use std::sync::Arc;

use itr_core::assembler::prompt_token_cost;
use itr_core::cache::SelectionCache;
use itr_core::corpus::{Corpus, InstructionFragment, SafetyOverlay, ToolSpec};
use itr_core::engine::{Engine, EngineConfig, EngineError, ExposureMode, StepQuery};
use itr_core::gate::{DiscoveryPolicy, FixedModel, GateConfig, ScriptedModel};
use itr_core::index::{build_indices, HashingEmbedder, DEFAULT_DIM};
use itr_core::selector::SelectionConfig;
use itr_core::telemetry::MemorySink;
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

fn corpus() -> Corpus {
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

fn engine(config: EngineConfig) -> Engine {
    let corpus = Arc::new(corpus());
    let index = Arc::new(build_indices(&corpus, Arc::new(HashingEmbedder::default()), DEFAULT_DIM).unwrap());
    Engine::new(corpus, index, config)
}

fn narrow() -> EngineConfig {
    EngineConfig {
        selection: SelectionConfig {
            budget: 400,
            max_instructions: 2,
            max_tools: 1,
            recall_first: true,
        },
        ..Default::default()
    }
}

#[test]
fn confident_reply_uses_one_prompt() {
    let e = engine(narrow());
    let mut model = ScriptedModel::with_confidences(&[0.9]);
    let r = e.step(&StepQuery::new("search contacts in the crm"), &mut model, "s1").unwrap();
    assert_eq!(r.prompts_issued, 1);
    assert!(!r.fallback_taken);
    assert_eq!(model.calls.len(), 1);
    assert_eq!(r.exposed_tools[0], vec!["t-crm"]);
}

#[test]
fn low_confidence_retries_once_with_superset() {
    let e = engine(narrow());
    let mut model = ScriptedModel::with_confidences(&[0.2, 0.9]);
    let r = e.step(&StepQuery::new("search contacts in the crm"), &mut model, "s1").unwrap();
    assert_eq!(r.prompts_issued, 2);
    assert!(r.fallback_taken);
    let (first, second) = (&model.calls[0], &model.calls[1]);
    assert!(first.iter().all(|t| second.contains(t)));
    assert!(second.len() > first.len());
    assert_eq!(r.confidences, vec![0.2, 0.9]);
}

#[test]
fn never_more_than_max_fallbacks_plus_one_calls() {
    let e = engine(narrow());
    let mut model = ScriptedModel::with_confidences(&[0.1, 0.1, 0.1]);
    let r = e.step(&StepQuery::new("weather forecast"), &mut model, "s1").unwrap();
    assert_eq!(r.prompts_issued, 2);
    assert_eq!(model.calls.len(), 2);
}

#[test]
fn tokens_spent_matches_assembler() {
    let e = engine(narrow());
    let mut model = ScriptedModel::with_confidences(&[0.2, 0.9]);
    let mut q = StepQuery::new("issue a refund");
    q.history_tokens = Some(2_000);
    let r = e.step(&q, &mut model, "s1").unwrap();
    let first = e.assemble(&e.expose(&e.plan(&q).unwrap().0.selection), 0).unwrap();
    assert_eq!(r.prompt_tokens[0], prompt_token_cost(&first, 2_000));
    let last = e.assemble(&r.selection, 0).unwrap();
    assert_eq!(r.prompt_tokens[1], prompt_token_cost(&last, 2_000));
    assert_eq!(r.tokens_spent, r.prompt_tokens.iter().sum::<u64>());
    assert_eq!(r.static_tokens[1] + 2_000, r.prompt_tokens[1]);
}

#[test]
fn monolithic_exposes_everything_and_never_retries() {
    let e = engine(EngineConfig {
        exposure: ExposureMode::MONOLITHIC,
        ..narrow()
    });
    let mut model = ScriptedModel::with_confidences(&[0.1]);
    let r = e.step(&StepQuery::new("anything"), &mut model, "s1").unwrap();
    assert_eq!(r.prompts_issued, 1);
    assert_eq!(r.exposed_tools[0].len(), 4);
    assert_eq!(r.selection.instructions.len(), 3);
}

#[test]
fn catalog_summary_flags_hidden_gold_tool() {
    let e = engine(EngineConfig {
        gate: GateConfig {
            discovery_policy: DiscoveryPolicy::CatalogSummary,
            ..Default::default()
        },
        ..narrow()
    });
    let mut model = ScriptedModel::with_confidences(&[0.1, 0.1]);
    let mut q = StepQuery::new("search contacts in the crm");
    q.gold_tools = vec!["t-weather".into()];
    let r = e.step(&q, &mut model, "s1").unwrap();
    assert!(r.catalog_summary);
    assert_eq!(r.hidden_tool_miss, Some(true));
    assert_eq!(model.calls[0], model.calls[1]);
}

#[test]
fn telemetry_one_record_per_step_with_errors() {
    let sink = Arc::new(MemorySink::default());
    let e = engine(narrow()).with_sink(sink.clone());
    let mut model = ScriptedModel::with_confidences(&[0.9]);
    e.step(&StepQuery::new("search contacts"), &mut model, "s1").unwrap();
    // Script exhausted: the model fails after the prompt was built.
    let err = e.step(&StepQuery::new("search contacts"), &mut model, "s2").unwrap_err();
    assert!(matches!(err, EngineError::Model(_)));
    assert!(e.step(&StepQuery::new("  "), &mut model, "s3").is_err());

    let records = sink.records();
    assert_eq!(records.len(), 3);
    assert_eq!(records[0].step_id, "s1");
    assert_eq!(records[0].confidences, vec![0.9]);
    assert!(records[0].error.is_none());
    assert!(records[1].error.as_deref().unwrap().contains("script exhausted"));
    assert!(!records[1].selected_tools.is_empty(), "partial telemetry keeps the selection");
    assert!(records[2].error.is_some());
}

#[test]
fn domain_pins_always_selected() {
    let mut config = narrow();
    config.domain_pins = BTreeMap::from([("billing".to_string(), vec!["t-refund".to_string()])]);
    config.selection.max_tools = 2;
    let e = engine(config);
    let mut q = StepQuery::new("weather forecast");
    q.domain_hint = Some("billing".into());
    let r = e.step(&q, &mut FixedModel { confidence: 0.9 }, "s1").unwrap();
    assert!(r.selection.tools.contains(&"t-refund".to_string()));
    assert_eq!(r.selection.tools[0], "t-refund");
}

#[test]
fn stale_index_rejected() {
    let old = corpus();
    let index = Arc::new(build_indices(&old, Arc::new(HashingEmbedder::default()), DEFAULT_DIM).unwrap());
    let newer = old.remove("t-mail", 1);
    let e = Engine::new(Arc::new(newer), index, narrow());
    let err = e.step(&StepQuery::new("send email"), &mut FixedModel { confidence: 1.0 }, "s1");
    assert!(matches!(err, Err(EngineError::StaleIndex { .. })));
}

#[test]
fn cache_changes_nothing_but_work() {
    let queries = ["search contacts", "issue a refund", "search contacts", "weather", "issue a refund"];
    let plain = engine(narrow());
    let cache = Arc::new(SelectionCache::new(16));
    let cached = engine(narrow()).with_cache(cache.clone());
    for q in queries {
        let q = StepQuery::new(q);
        let a = plain.step(&q, &mut ScriptedModel::with_confidences(&[0.3, 0.9]), "s").unwrap();
        let b = cached.step(&q, &mut ScriptedModel::with_confidences(&[0.3, 0.9]), "s").unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
    let stats = cache.stats();
    assert_eq!(stats.computations, 3);
    assert_eq!(stats.hits, 2);
}
