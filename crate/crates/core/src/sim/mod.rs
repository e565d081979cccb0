//! Seeded Monte-Carlo episodes under monolithic and retrieval policies.
//!
//! Every (scenario, catalog size, episode index) pair derives its own
//! ChaCha8 streams, so results do not depend on scheduling and episodes of
//! different policies share tasks and queries (paired comparisons).

mod corpus_gen;
mod mock;
mod stats;

pub use corpus_gen::{synthetic_corpus, synthetic_overlay, CorpusSpec, FragmentMeta, SyntheticCorpus, ToolMeta, DOMAINS};
pub use mock::{mock_model_step, MockChoice, MockModel};
pub use stats::{mean_ci, paired_ci, MeanCi};

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::SelectionCache;
use crate::costmodel::history_at;
use crate::engine::{Engine, EngineConfig, EngineError, ExposureMode, StepQuery};
use crate::index::{build_indices, HashingEmbedder, IndexError, DEFAULT_DIM};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot read scenario {path}: {message}")]
    Read { path: String, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    B0Monolithic,
    B1RouterOnly,
    B2PromptRag,
    Itr,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::B0Monolithic,
        PolicyKind::B1RouterOnly,
        PolicyKind::B2PromptRag,
        PolicyKind::Itr,
    ];

    pub fn exposure(self) -> ExposureMode {
        match self {
            PolicyKind::B0Monolithic => ExposureMode::MONOLITHIC,
            PolicyKind::B1RouterOnly => ExposureMode::ROUTER_ONLY,
            PolicyKind::B2PromptRag => ExposureMode::PROMPT_RAG,
            PolicyKind::Itr => ExposureMode::RETRIEVE_BOTH,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::B0Monolithic => "B0 Monolithic",
            PolicyKind::B1RouterOnly => "B1 Router-Only",
            PolicyKind::B2PromptRag => "B2 Prompt-RAG",
            PolicyKind::Itr => "ITR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimHazard {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Episodes per (catalog size, policy).
    pub episodes: usize,
    pub catalog_sizes: Vec<usize>,
    pub domains: usize,
    pub fragments_per_domain: usize,
    /// Steps per episode (`L`).
    pub steps: usize,
    /// Inclusive range of gold tools per task; steps cycle through them.
    pub tools_per_task: (usize, usize),
    pub policies: Vec<PolicyKind>,
    pub hazard: SimHazard,
    /// Retrieval, selection and gate settings; exposure is set per policy.
    pub engine: EngineConfig,
    /// Allow the discovery retry.
    pub fallback: bool,
    pub history_growth: u64,
    /// Chance that each confuser slot adds another tool's phrase to a query.
    pub confuser_rate: f64,
    pub confuser_slots: usize,
    /// Share of correct steps an episode needs to succeed.
    pub success_threshold: f64,
    /// Weights over `catalog_sizes` for the mixed-catalog summary; empty
    /// means no summary.
    pub mixture_weights: Vec<f64>,
    pub cache: bool,
    /// Currency per 1K prompt tokens.
    pub input_rate: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".into(),
            seed: 7,
            episodes: 200,
            catalog_sizes: vec![8, 40, 120],
            domains: 8,
            fragments_per_domain: 3,
            steps: 5,
            tools_per_task: (1, 1),
            policies: PolicyKind::ALL.to_vec(),
            hazard: SimHazard { alpha: 3.0, beta: 0.1 },
            engine: EngineConfig::default(),
            fallback: true,
            history_growth: 2_000,
            confuser_rate: 0.3,
            confuser_slots: 2,
            success_threshold: 0.8,
            mixture_weights: Vec::new(),
            cache: true,
            input_rate: 0.01,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Scenario::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
        let (lo, hi) = self.tools_per_task;
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if lo == 0 || lo > hi {
            return bad("tools_per_task must be a non-empty range starting at 1 or more");
        }
        if self.catalog_sizes.is_empty() || self.policies.is_empty() {
            return bad("catalog_sizes and policies must be non-empty");
        }
        if self.catalog_sizes.iter().any(|&n| n < hi.max(2)) {
            return bad("every catalog size must exceed the gold tools per task and be at least 2");
        }
        if !(self.hazard.alpha > 0.0 && self.hazard.beta >= 0.0) {
            return bad("hazard needs alpha > 0 and beta >= 0");
        }
        if !(0.0..=1.0).contains(&self.confuser_rate) || !(0.0..=1.0).contains(&self.success_threshold) {
            return bad("rates must lie in [0, 1]");
        }
        if !self.mixture_weights.is_empty()
            && (self.mixture_weights.len() != self.catalog_sizes.len()
                || self.mixture_weights.iter().any(|w| *w < 0.0)
                || self.mixture_weights.iter().sum::<f64>() <= 0.0)
        {
            return bad("mixture_weights must be non-negative, one per catalog size");
        }
        if self.domains == 0 || self.fragments_per_domain == 0 {
            return bad("domains and fragments_per_domain must be positive");
        }
        self.engine
            .retrieval
            .weights
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        self.engine
            .gate
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        Ok(())
    }

    fn engine_config(&self, policy: PolicyKind) -> EngineConfig {
        let mut cfg = self.engine.clone();
        cfg.exposure = policy.exposure();
        if !self.fallback {
            cfg.gate.max_fallbacks = 0;
        }
        cfg
    }
}

/// Stream seed for one (scenario, catalog, episode, purpose) tuple.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p;
        // splitmix64 finalizer
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

const TASK_STREAM: u64 = 0;
const MODEL_STREAM: u64 = 1;
const CORPUS_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTask {
    pub id: String,
    pub catalog_size: usize,
    pub domain: String,
    pub gold_tools: Vec<String>,
    pub gold_instructions: Vec<String>,
    /// Gold tool of each step.
    pub step_gold: Vec<String>,
    pub queries: Vec<String>,
}

pub fn make_task(scenario: &Scenario, synth: &SyntheticCorpus, episode: usize) -> SimTask {
    let n = synth.tools.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[scenario.seed, n as u64, episode as u64, TASK_STREAM]));
    let (lo, hi) = scenario.tools_per_task;
    let k = rng.random_range(lo..=hi).min(n);
    let gold: Vec<&ToolMeta> = index::sample(&mut rng, n, k).into_iter().map(|i| &synth.tools[i]).collect();
    let domain = gold[0].domain.clone();
    let domain_fragments: Vec<&FragmentMeta> = synth.fragments.iter().filter(|f| f.domain == domain).collect();
    let gold_fragment = domain_fragments.choose(&mut rng).copied();

    let mut step_gold = Vec::with_capacity(scenario.steps);
    let mut queries = Vec::with_capacity(scenario.steps);
    for t in 0..scenario.steps {
        let g = gold[t % k];
        let mut q = format!("{} in {}", g.phrase(), g.domain);
        if let Some(f) = gold_fragment {
            q.push_str(&format!(" per {}", f.codeword));
        }
        for _ in 0..scenario.confuser_slots {
            if !rng.random_bool(scenario.confuser_rate) {
                continue;
            }
            let same: Vec<&ToolMeta> = synth.tools.iter().filter(|c| c.id != g.id && c.domain == g.domain).collect();
            let pool: Vec<&ToolMeta> = if same.is_empty() {
                synth.tools.iter().filter(|c| c.id != g.id).collect()
            } else {
                same
            };
            if let Some(c) = pool.choose(&mut rng) {
                q.push_str(" and ");
                q.push_str(&c.phrase());
            }
        }
        step_gold.push(g.id.clone());
        queries.push(q);
    }
    SimTask {
        id: format!("n{n}-e{episode:05}"),
        catalog_size: n,
        domain,
        gold_tools: gold.iter().map(|g| g.id.clone()).collect(),
        gold_instructions: gold_fragment.map(|f| vec![f.id.clone()]).unwrap_or_default(),
        step_gold,
        queries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub gold_tool: String,
    /// Tools exposed in the final prompt of the step (`m`).
    pub exposed_count: usize,
    pub gold_exposed: bool,
    pub chosen: Option<String>,
    pub correct: bool,
    pub fallback: bool,
    pub confidences: Vec<f64>,
    /// Tokens over all prompts issued this step, history included.
    pub ctx_tokens: u64,
    /// First prompt without history.
    pub static_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub policy: PolicyKind,
    pub task: String,
    pub catalog_size: usize,
    pub steps: Vec<StepTrace>,
    pub gold_instructions_exposed: bool,
    pub success: bool,
    /// Failed while the gold tool was hidden at a failing step.
    pub hidden_tool_miss: bool,
    pub ctx_total: u64,
}

impl EpisodeTrace {
    pub fn tools_correct(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.correct).count() as f64 / self.steps.len() as f64
    }

    pub fn recall(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.gold_exposed).count() as f64 / self.steps.len() as f64
    }
}

pub fn run_episode(
    engine: &Engine,
    policy: PolicyKind,
    task: &SimTask,
    scenario: &Scenario,
    model_seed: u64,
) -> Result<EpisodeTrace, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed);
    let mut steps = Vec::with_capacity(task.queries.len());
    let mut shown_instructions = BTreeSet::new();
    for (t, (query, gold)) in task.queries.iter().zip(&task.step_gold).enumerate() {
        let q = StepQuery {
            query: query.clone(),
            history_tokens: Some(history_at(t as u64 + 1, 0, scenario.history_growth)),
            gold_tools: vec![gold.clone()],
            ..Default::default()
        };
        let mut model = MockModel {
            gold: gold.clone(),
            alpha: scenario.hazard.alpha,
            beta: scenario.hazard.beta,
            tau: scenario.engine.gate.tau,
            rng: &mut rng,
        };
        let r = engine.step(&q, &mut model, &format!("{}:{}", task.id, t + 1))?;
        let exposed = r.exposed_tools.last().expect("one prompt per step");
        shown_instructions.extend(r.selection.instructions.iter().cloned());
        steps.push(StepTrace {
            step: t + 1,
            gold_tool: gold.clone(),
            exposed_count: exposed.len(),
            gold_exposed: exposed.contains(gold),
            correct: r.tool_call.as_deref() == Some(gold.as_str()),
            chosen: r.tool_call,
            fallback: r.fallback_taken,
            confidences: r.confidences,
            ctx_tokens: r.tokens_spent,
            static_tokens: r.static_tokens[0],
        });
    }
    let gold_instructions_exposed = task.gold_instructions.iter().all(|g| shown_instructions.contains(g));
    let correct = steps.iter().filter(|s| s.correct).count() as f64;
    let success = gold_instructions_exposed && correct >= scenario.success_threshold * steps.len() as f64 - 1e-9;
    let hidden_tool_miss = !success && steps.iter().any(|s| !s.correct && !s.gold_exposed);
    Ok(EpisodeTrace {
        policy,
        task: task.id.clone(),
        catalog_size: task.catalog_size,
        ctx_total: steps.iter().map(|s| s.ctx_tokens).sum(),
        steps,
        gold_instructions_exposed,
        success,
        hidden_tool_miss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: PolicyKind,
    pub catalog_size: usize,
    pub episodes: usize,
    pub ctx_per_step: f64,
    pub static_per_step: f64,
    /// Percent of steps with the gold tool called.
    pub tools_correct: MeanCi,
    /// Percent of steps with the gold tool exposed.
    pub recall: f64,
    pub api_success: f64,
    /// Percent of episodes failing with the gold tool hidden.
    pub miss_rate: MeanCi,
    /// Percent of steps that took the discovery retry.
    pub fallback_rate: f64,
    /// Mean spend per episode.
    pub cost: f64,
    /// Mean cumulative context tokens after each step.
    pub cumulative_ctx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub catalog_size: usize,
    pub policy: PolicyKind,
    pub baseline: PolicyKind,
    /// Paired difference `policy − baseline`, in percentage points.
    pub diff: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedRow {
    pub policy: PolicyKind,
    pub tools_correct: f64,
    pub ctx_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub scenario: String,
    pub rows: Vec<MetricsRow>,
    pub comparisons: Vec<Comparison>,
    pub mixed: Vec<MixedRow>,
}

impl MetricsTable {
    pub fn row(&self, policy: PolicyKind, catalog_size: usize) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.catalog_size == catalog_size)
    }

    pub fn comparison(&self, metric: &str, policy: PolicyKind, catalog_size: usize) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.metric == metric && c.policy == policy && c.catalog_size == catalog_size)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub table: MetricsTable,
    /// Ordered by catalog size, then policy order in the scenario, then episode.
    pub traces: Vec<EpisodeTrace>,
    /// Retrieval-and-selection computations across all engines.
    pub scoring_work: u64,
}

impl BenchmarkOutput {
    pub fn traces_for(&self, policy: PolicyKind, catalog_size: usize) -> Vec<&EpisodeTrace> {
        self.traces
            .iter()
            .filter(|t| t.policy == policy && t.catalog_size == catalog_size)
            .collect()
    }
}

fn summarize(policy: PolicyKind, catalog_size: usize, traces: &[EpisodeTrace], input_rate: f64) -> MetricsRow {
    let episodes = traces.len();
    let steps: Vec<&StepTrace> = traces.iter().flat_map(|t| &t.steps).collect();
    let per_step = |f: &dyn Fn(&StepTrace) -> f64| {
        if steps.is_empty() {
            0.0
        } else {
            steps.iter().map(|s| f(s)).sum::<f64>() / steps.len() as f64
        }
    };
    let pct = |xs: Vec<f64>| {
        let mut ci = mean_ci(&xs);
        ci.mean *= 100.0;
        ci.low *= 100.0;
        ci.high *= 100.0;
        ci
    };
    let max_steps = traces.iter().map(|t| t.steps.len()).max().unwrap_or(0);
    let cumulative_ctx = (0..max_steps)
        .map(|i| {
            traces
                .iter()
                .map(|t| t.steps.iter().take(i + 1).map(|s| s.ctx_tokens).sum::<u64>() as f64)
                .sum::<f64>()
                / episodes as f64
        })
        .collect();
    MetricsRow {
        policy,
        catalog_size,
        episodes,
        ctx_per_step: per_step(&|s| s.ctx_tokens as f64),
        static_per_step: per_step(&|s| s.static_tokens as f64),
        tools_correct: pct(traces.iter().map(EpisodeTrace::tools_correct).collect()),
        recall: 100.0 * per_step(&|s| s.gold_exposed as u8 as f64),
        api_success: if episodes == 0 {
            0.0
        } else {
            100.0 * traces.iter().filter(|t| t.success).count() as f64 / episodes as f64
        },
        miss_rate: pct(traces.iter().map(|t| t.hidden_tool_miss as u8 as f64).collect()),
        fallback_rate: 100.0 * per_step(&|s| s.fallback as u8 as f64),
        cost: if episodes == 0 {
            0.0
        } else {
            traces.iter().map(|t| t.ctx_total as f64).sum::<f64>() / episodes as f64 / 1000.0 * input_rate
        },
        cumulative_ctx,
    }
}

/// Runs every policy over every catalog size. Zero episodes give an empty
/// table.
pub fn run_benchmark(scenario: &Scenario) -> Result<BenchmarkOutput, SimError> {
    scenario.validate()?;
    let mut out = BenchmarkOutput {
        table: MetricsTable {
            scenario: scenario.name.clone(),
            ..Default::default()
        },
        ..Default::default()
    };
    if scenario.episodes == 0 {
        return Ok(out);
    }
    for &n in &scenario.catalog_sizes {
        let synth = synthetic_corpus(&CorpusSpec {
            tools: n,
            domains: scenario.domains,
            fragments_per_domain: scenario.fragments_per_domain,
            total_tokens: None,
            seed: derive_seed(&[scenario.seed, n as u64, CORPUS_STREAM]),
        });
        let corpus = Arc::new(synth.corpus.clone());
        let index = Arc::new(build_indices(&corpus, Arc::new(HashingEmbedder::default()), DEFAULT_DIM)?);
        let tasks: Vec<SimTask> = (0..scenario.episodes).map(|e| make_task(scenario, &synth, e)).collect();

        let mut by_policy = Vec::new();
        for &policy in &scenario.policies {
            let mut engine = Engine::new(corpus.clone(), index.clone(), scenario.engine_config(policy));
            if scenario.cache {
                engine = engine.with_cache(Arc::new(SelectionCache::default()));
            }
            let traces = tasks
                .par_iter()
                .enumerate()
                .map(|(e, task)| {
                    let seed = derive_seed(&[scenario.seed, n as u64, e as u64, MODEL_STREAM]);
                    run_episode(&engine, policy, task, scenario, seed)
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.scoring_work += engine.scoring_work();
            out.table
                .rows
                .push(summarize(policy, n, &traces, scenario.input_rate));
            by_policy.push((policy, traces));
        }

        if let Some((_, base)) = by_policy.iter().find(|(p, _)| *p == PolicyKind::B0Monolithic) {
            for (policy, traces) in by_policy.iter().filter(|(p, _)| *p != PolicyKind::B0Monolithic) {
                let a: Vec<f64> = traces.iter().map(|t| 100.0 * t.tools_correct()).collect();
                let b: Vec<f64> = base.iter().map(|t| 100.0 * t.tools_correct()).collect();
                out.table.comparisons.push(Comparison {
                    metric: "tools_correct".into(),
                    catalog_size: n,
                    policy: *policy,
                    baseline: PolicyKind::B0Monolithic,
                    diff: paired_ci(&a, &b),
                });
            }
        }
        out.traces.extend(by_policy.into_iter().flat_map(|(_, t)| t));
    }

    if !scenario.mixture_weights.is_empty() {
        let total: f64 = scenario.mixture_weights.iter().sum();
        for &policy in &scenario.policies {
            let mut tc = 0.0;
            let mut ctx = 0.0;
            for (&n, &w) in scenario.catalog_sizes.iter().zip(&scenario.mixture_weights) {
                if let Some(r) = out.table.row(policy, n) {
                    tc += w / total * r.tools_correct.mean;
                    ctx += w / total * r.ctx_per_step;
                }
            }
            out.table.mixed.push(MixedRow {
                policy,
                tools_correct: tc,
                ctx_per_step: ctx,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            episodes: 6,
            catalog_sizes: vec![8],
            steps: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_episodes_is_empty() {
        let out = run_benchmark(&Scenario {
            episodes: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(out.table.rows.is_empty());
        assert!(out.traces.is_empty());
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        for bad in [
            Scenario { steps: 0, ..small() },
            Scenario {
                tools_per_task: (2, 1),
                ..small()
            },
            Scenario {
                catalog_sizes: vec![1],
                ..small()
            },
            Scenario {
                mixture_weights: vec![1.0, 1.0],
                ..small()
            },
        ] {
            assert!(matches!(bad.validate(), Err(SimError::InvalidScenario(_))));
        }
        assert!(Scenario::from_json(r#"{"steps": "x"}"#).is_err());
        assert_eq!(Scenario::from_json("{}").unwrap(), Scenario::default());
    }

    #[test]
    fn tasks_are_shared_across_policies() {
        let s = small();
        let synth = synthetic_corpus(&CorpusSpec {
            tools: 8,
            ..Default::default()
        });
        assert_eq!(make_task(&s, &synth, 3), make_task(&s, &synth, 3));
        assert_ne!(make_task(&s, &synth, 3).queries, make_task(&s, &synth, 4).queries);
    }

    #[test]
    fn one_trace_per_episode_and_policy() {
        let out = run_benchmark(&small()).unwrap();
        assert_eq!(out.traces.len(), 6 * 4);
        assert_eq!(out.table.rows.len(), 4);
        assert_eq!(out.table.comparisons.len(), 3);
        for t in &out.traces {
            assert_eq!(t.steps.len(), 3);
        }
    }
}
