//! The per-step loop: retrieve, re-rank, select, assemble, call the model,
//! gate on confidence, and retry once with a wider tool exposure.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembler::{assemble_prompt, AssembleError, AssembledPrompt};
use crate::cache::{CacheKey, SelectionCache};
use crate::corpus::Corpus;
use crate::gate::{expand_or_discover, sufficiency_gate, GateConfig, GateDecision, GateError, ModelClient};
use crate::index::{DocKind, IndexBundle, IndexError, JaccardReranker, Reranker, RetrievalConfig, Retrieved};
use crate::selector::{greedy_select, SelectError, SelectionCandidate, SelectionConfig, SelectionResult};
use crate::telemetry::{TelemetryRecord, TelemetrySink};
use crate::tokenize::{QuarterCharCounter, TokenCounter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    /// Everything in the corpus, every step.
    All,
    /// Only what retrieval and selection pick.
    Retrieve,
}

/// Which side of the prompt is narrowed by retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExposureMode {
    pub instructions: Exposure,
    pub tools: Exposure,
}

impl ExposureMode {
    pub const MONOLITHIC: ExposureMode = ExposureMode {
        instructions: Exposure::All,
        tools: Exposure::All,
    };
    pub const ROUTER_ONLY: ExposureMode = ExposureMode {
        instructions: Exposure::All,
        tools: Exposure::Retrieve,
    };
    pub const PROMPT_RAG: ExposureMode = ExposureMode {
        instructions: Exposure::Retrieve,
        tools: Exposure::All,
    };
    pub const RETRIEVE_BOTH: ExposureMode = ExposureMode {
        instructions: Exposure::Retrieve,
        tools: Exposure::Retrieve,
    };

    fn retrieves_anything(&self) -> bool {
        self.instructions == Exposure::Retrieve || self.tools == Exposure::Retrieve
    }
}

impl Default for ExposureMode {
    fn default() -> Self {
        ExposureMode::RETRIEVE_BOTH
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub retrieval: RetrievalConfig,
    pub selection: SelectionConfig,
    pub gate: GateConfig,
    pub exposure: ExposureMode,
    /// Tools (or fragments) always selected for a given domain hint.
    pub domain_pins: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepQuery {
    pub query: String,
    /// Prior turn summaries.
    #[serde(default)]
    pub history: Vec<String>,
    /// Overrides the counted size of `history`.
    #[serde(default)]
    pub history_tokens: Option<u64>,
    #[serde(default)]
    pub domain_hint: Option<String>,
    /// Known-correct tools, when available; enables the hidden-tool flag.
    #[serde(default)]
    pub gold_tools: Vec<String>,
}

impl StepQuery {
    pub fn new(query: impl Into<String>) -> Self {
        StepQuery {
            query: query.into(),
            ..Default::default()
        }
    }

    /// `U_t`
    pub fn history_tokens(&self, counter: &dyn TokenCounter) -> u64 {
        self.history_tokens
            .unwrap_or_else(|| self.history.iter().map(|h| counter.count(h)).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub output: String,
    pub tool_call: Option<String>,
    /// Confidence of the final reply.
    pub confidence: f64,
    pub confidences: Vec<f64>,
    /// The selection behind the last issued prompt.
    pub selection: SelectionResult,
    pub prompts_issued: u32,
    pub fallback_taken: bool,
    /// Sum of `tok_itr` over issued prompts.
    pub tokens_spent: u64,
    /// `tok_itr` of each issued prompt.
    pub prompt_tokens: Vec<u64>,
    /// Prompt tokens excluding history, per issued prompt.
    pub static_tokens: Vec<u64>,
    /// Tools with full schemas, per issued prompt.
    pub exposed_tools: Vec<Vec<String>>,
    pub catalog_summary: bool,
    /// `Some(true)` when gold tools were given and none reached the final prompt.
    pub hidden_tool_miss: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("index built for corpus {index} but corpus is {corpus}")]
    StaleIndex { index: String, corpus: String },
    #[error("corpus has no safety overlay")]
    MissingOverlay,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("model call failed: {0}")]
    Model(String),
}

/// Retrieval and selection for one signature; what the cache stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Candidate pools in rank order, including pinned items.
    pub instruction_pool: Vec<SelectionCandidate>,
    pub tool_pool: Vec<SelectionCandidate>,
    /// Selection over the retrieved side(s) only.
    pub selection: SelectionResult,
}

pub struct Engine {
    corpus: Arc<Corpus>,
    index: Arc<IndexBundle>,
    reranker: Arc<dyn Reranker>,
    counter: Arc<dyn TokenCounter>,
    config: EngineConfig,
    cache: Option<Arc<SelectionCache<Plan>>>,
    sink: Option<Arc<dyn TelemetrySink>>,
    scoring_runs: AtomicU64,
}

impl Engine {
    pub fn new(corpus: Arc<Corpus>, index: Arc<IndexBundle>, config: EngineConfig) -> Self {
        Engine {
            corpus,
            index,
            reranker: Arc::new(JaccardReranker),
            counter: Arc::new(QuarterCharCounter),
            config,
            cache: None,
            sink: None,
            scoring_runs: AtomicU64::new(0),
        }
    }

    pub fn with_reranker(mut self, reranker: Arc<dyn Reranker>) -> Self {
        self.reranker = reranker;
        self
    }

    pub fn with_counter(mut self, counter: Arc<dyn TokenCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn with_cache(mut self, cache: Arc<SelectionCache<Plan>>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn TelemetrySink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn index(&self) -> &IndexBundle {
        &self.index
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&SelectionCache<Plan>> {
        self.cache.as_deref()
    }

    /// Number of retrieval-and-selection computations performed; cache hits
    /// do not count.
    pub fn scoring_work(&self) -> u64 {
        self.scoring_runs.load(Ordering::Relaxed)
    }

    fn check_fresh(&self) -> Result<(), EngineError> {
        if self.index.corpus_version != self.corpus.version {
            return Err(EngineError::StaleIndex {
                index: self.index.corpus_version.to_string(),
                corpus: self.corpus.version.to_string(),
            });
        }
        Ok(())
    }

    /// Top-M retrieval, re-ranked when enabled.
    pub fn retrieve(&self, query: &str) -> Result<Retrieved, EngineError> {
        self.check_fresh()?;
        let cfg = &self.config.retrieval;
        let mut r = self.index.retrieve(query, cfg)?;
        if cfg.rerank {
            r.instructions = self.index.rerank(query, r.instructions, self.reranker.as_ref(), &cfg.weights)?;
            r.tools = self.index.rerank(query, r.tools, self.reranker.as_ref(), &cfg.weights)?;
        }
        Ok(r)
    }

    fn pinned_ids(&self, domain_hint: Option<&str>) -> BTreeSet<String> {
        let mut pinned: BTreeSet<String> = self
            .corpus
            .fragments
            .iter()
            .filter(|f| f.pinned)
            .map(|f| f.id.clone())
            .chain(self.corpus.tools.iter().filter(|t| t.pinned).map(|t| t.id.clone()))
            .collect();
        if let Some(ids) = domain_hint.and_then(|d| self.config.domain_pins.get(d)) {
            pinned.extend(ids.iter().cloned());
        }
        pinned
    }

    /// Signature under which [`Engine::plan`] results are cached.
    pub fn cache_key(&self, q: &StepQuery) -> CacheKey {
        let digest = CacheKey::config_digest(&(
            &self.config.retrieval,
            &self.config.selection,
            &self.config.exposure,
            &self.config.domain_pins,
            self.reranker.id(),
            self.index.embedder_id(),
        ));
        CacheKey::new(&q.query, q.domain_hint.as_deref(), &self.corpus.version, &digest)
    }

    /// Retrieval plus greedy selection, through the cache when one is set.
    /// Returns the plan and whether it was a cache hit.
    pub fn plan(&self, q: &StepQuery) -> Result<(Plan, bool), EngineError> {
        if q.query.trim().is_empty() {
            return Err(EngineError::EmptyQuery);
        }
        self.check_fresh()?;
        if !self.config.exposure.retrieves_anything() {
            return Ok((
                Plan {
                    instruction_pool: Vec::new(),
                    tool_pool: Vec::new(),
                    selection: SelectionResult::default(),
                },
                false,
            ));
        }
        match &self.cache {
            Some(cache) => cache.get_or_compute(&self.cache_key(q), || self.compute_plan(q)),
            None => self.compute_plan(q).map(|p| (p, false)),
        }
    }

    fn compute_plan(&self, q: &StepQuery) -> Result<Plan, EngineError> {
        self.scoring_runs.fetch_add(1, Ordering::Relaxed);
        let retrieved = self.retrieve(&q.query)?;
        let pinned = self.pinned_ids(q.domain_hint.as_deref());
        let exposure = self.config.exposure;
        let mut instruction_pool = Vec::new();
        let mut tool_pool = Vec::new();
        if exposure.instructions == Exposure::Retrieve {
            instruction_pool = retrieved.instructions.iter().map(SelectionCandidate::from).collect();
        }
        if exposure.tools == Exposure::Retrieve {
            tool_pool = retrieved.tools.iter().map(SelectionCandidate::from).collect();
        }
        // Pinned items outside the top-M still have to be selectable.
        let mut selector_pins = BTreeSet::new();
        for id in &pinned {
            let (pool, kind, cost) = if let Some(f) = self.corpus.fragment(id) {
                if exposure.instructions == Exposure::All {
                    continue;
                }
                (&mut instruction_pool, DocKind::Instruction, f.token_cost)
            } else if let Some(t) = self.corpus.tool(id) {
                if exposure.tools == Exposure::All {
                    continue;
                }
                (&mut tool_pool, DocKind::Tool, t.token_cost)
            } else {
                return Err(SelectError::UnknownPinned(id.clone()).into());
            };
            if !pool.iter().any(|c| &c.id == id) {
                pool.push(SelectionCandidate::new(id.clone(), kind, 0.0, cost));
            }
            selector_pins.insert(id.clone());
        }
        let selection = greedy_select(&instruction_pool, &tool_pool, &self.config.selection, &selector_pins)?;
        Ok(Plan {
            instruction_pool,
            tool_pool,
            selection,
        })
    }

    /// Fills in the non-retrieved side(s) with the whole corpus.
    pub fn expose(&self, retrieved: &SelectionResult) -> SelectionResult {
        let mut s = retrieved.clone();
        if self.config.exposure.instructions == Exposure::All {
            s.instructions = self.corpus.fragments.iter().map(|f| f.id.clone()).collect();
        }
        if self.config.exposure.tools == Exposure::All {
            s.tools = self.corpus.tools.iter().map(|t| t.id.clone()).collect();
        }
        s.spent_tokens = s
            .instructions
            .iter()
            .filter_map(|id| self.corpus.fragment(id).map(|f| f.token_cost))
            .chain(s.tools.iter().filter_map(|id| self.corpus.tool(id).map(|t| t.token_cost)))
            .sum();
        s
    }

    pub fn assemble(&self, selection: &SelectionResult, history_tokens: u64) -> Result<AssembledPrompt, EngineError> {
        let overlay = self.corpus.safety_overlay.as_ref().ok_or(EngineError::MissingOverlay)?;
        Ok(assemble_prompt(overlay, selection, &self.corpus, &self.corpus.routing_note, self.counter.as_ref())?
            .with_history(history_tokens))
    }

    /// Runs one step and emits one telemetry record, also on error.
    pub fn step(&self, q: &StepQuery, client: &mut dyn ModelClient, step_id: &str) -> Result<StepResult, EngineError> {
        let mut record = TelemetryRecord {
            step_id: step_id.to_string(),
            corpus_version: self.corpus.version.to_string(),
            ..Default::default()
        };
        let out = self.step_inner(q, client, &mut record);
        if let Err(e) = &out {
            record.error = Some(e.to_string());
        }
        if let Some(sink) = &self.sink {
            sink.record(&record);
        }
        out
    }

    fn step_inner(
        &self,
        q: &StepQuery,
        client: &mut dyn ModelClient,
        record: &mut TelemetryRecord,
    ) -> Result<StepResult, EngineError> {
        self.config.gate.validate()?;
        let (plan, hit) = self.plan(q)?;
        record.cache_hit = hit;
        let history = q.history_tokens(self.counter.as_ref());
        let gate = &self.config.gate;

        let mut selection = plan.selection.clone();
        let mut selection_config = self.config.selection.clone();
        let mut catalog_summary = false;
        let mut fallbacks = 0u32;
        let mut result = StepResult {
            output: String::new(),
            tool_call: None,
            confidence: 0.0,
            confidences: Vec::new(),
            selection: SelectionResult::default(),
            prompts_issued: 0,
            fallback_taken: false,
            tokens_spent: 0,
            prompt_tokens: Vec::new(),
            static_tokens: Vec::new(),
            exposed_tools: Vec::new(),
            catalog_summary: false,
            hidden_tool_miss: None,
        };
        loop {
            let exposed_selection = self.expose(&selection);
            let mut prompt = self.assemble(&exposed_selection, history)?;
            if catalog_summary {
                prompt = prompt.with_catalog_summary(&self.corpus.tools, self.counter.as_ref());
            }
            let exposed = prompt.exposed_tools();
            record.selected_instructions = exposed_selection.instructions.clone();
            record.selected_tools = exposed_selection.tools.clone();
            result.prompts_issued += 1;
            result.tokens_spent += prompt.tok_itr;
            result.prompt_tokens.push(prompt.tok_itr);
            result.static_tokens.push(prompt.total_tokens);
            result.exposed_tools.push(exposed.clone());
            record.tokens_spent = result.tokens_spent;

            let reply = client
                .call(&prompt, &exposed, &q.query)
                .map_err(|e| EngineError::Model(e.0))?;
            let confidence = reply.confidence.clamp(0.0, 1.0);
            result.confidences.push(confidence);
            record.confidences.push(confidence);
            result.output = reply.output;
            result.tool_call = reply.tool_call;
            result.confidence = confidence;
            result.selection = exposed_selection;

            let retry = sufficiency_gate(confidence, gate.tau) == GateDecision::Fallback
                && fallbacks < gate.max_fallbacks
                && self.config.exposure.tools == Exposure::Retrieve;
            if !retry {
                break;
            }
            let d = expand_or_discover(
                &selection,
                &plan.instruction_pool,
                &plan.tool_pool,
                &selection_config,
                gate,
                fallbacks,
            )?;
            selection = d.selection;
            selection_config = d.selection_config;
            catalog_summary |= d.catalog_summary;
            fallbacks += 1;
            result.fallback_taken = true;
            record.fallback_taken = true;
        }
        result.catalog_summary = catalog_summary;
        if !q.gold_tools.is_empty() {
            let shown = result.exposed_tools.last().expect("at least one prompt");
            result.hidden_tool_miss = Some(!q.gold_tools.iter().any(|g| shown.contains(g)));
        }
        Ok(result)
    }
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("corpus_version", &self.corpus.version)
            .field("config", &self.config)
            .finish()
    }
}
