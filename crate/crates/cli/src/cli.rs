//! Command-line verbs, one per module boundary.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use itr_core::corpus::{save_jsonl, validate_corpus};
use itr_core::costmodel::{
    compounding_series, consistency_report, max_loops_table, CostParams, DEFAULT_HISTORY_GROWTH, DEFAULT_WINDOW,
    ITR_STATIC_TOKENS,
};
use itr_core::engine::StepQuery;
use itr_core::gate::DiscoveryPolicy;
use itr_core::report::{
    catalog_scaling_report, compounding_report, consistency_table, max_loops_report, metrics_report, mixed_report,
    render_all, ReportFormat,
};
use itr_core::sim::{run_benchmark, Scenario};

use crate::config::{load_corpus, CliError, Runtime, ServiceConfig};
use crate::model::ModelConfig;
use crate::service::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "itr", version, about = "Per-step instruction and tool retrieval for agent loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiscoveryArg {
    ExpandKb,
    CatalogSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostPreset {
    MaxLoops,
    Compounding,
    All,
}

/// Engine settings shared by the corpus-backed verbs.
#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    /// JSON configuration file; flags and ITR_* variables override it.
    #[arg(long, env = "ITR_CONFIG")]
    pub config: Option<PathBuf>,
    /// Corpus `.jsonl` file or directory of `.jsonl` files.
    #[arg(long, env = "ITR_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Raw system prompt to chunk into fragments (directory corpora only).
    #[arg(long, env = "ITR_SYSTEM_PROMPT")]
    pub system_prompt: Option<PathBuf>,
    #[arg(long, env = "ITR_M_A")]
    pub m_a: Option<usize>,
    #[arg(long, env = "ITR_M_B")]
    pub m_b: Option<usize>,
    /// Token budget for fragments plus tool schemas.
    #[arg(long, env = "ITR_BUDGET")]
    pub budget: Option<u64>,
    #[arg(long, env = "ITR_K_A")]
    pub k_a: Option<usize>,
    #[arg(long, env = "ITR_K_B")]
    pub k_b: Option<usize>,
    #[arg(long, env = "ITR_TAU")]
    pub tau: Option<f64>,
    #[arg(long, env = "ITR_DISCOVERY", value_enum)]
    pub discovery: Option<DiscoveryArg>,
    #[arg(long, env = "ITR_CACHE_CAPACITY")]
    pub cache_capacity: Option<usize>,
    /// Append JSON Lines telemetry here.
    #[arg(long, env = "ITR_TELEMETRY")]
    pub telemetry: Option<PathBuf>,
    /// POST prompts to this URL instead of using the mock model.
    #[arg(long, env = "ITR_MODEL_URL")]
    pub model_url: Option<String>,
    #[arg(long, env = "ITR_MOCK_CONFIDENCE")]
    pub mock_confidence: Option<f64>,
}

impl EngineArgs {
    pub fn resolve(&self) -> Result<ServiceConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ServiceConfig::from_file(p)?,
            None => ServiceConfig::default(),
        };
        if let Some(v) = &self.corpus {
            c.corpus = Some(v.clone());
        }
        if let Some(v) = &self.system_prompt {
            c.system_prompt = Some(v.clone());
        }
        if let Some(v) = self.m_a {
            c.engine.retrieval.m_a = v;
        }
        if let Some(v) = self.m_b {
            c.engine.retrieval.m_b = v;
        }
        if let Some(v) = self.budget {
            c.engine.selection.budget = v;
        }
        if let Some(v) = self.k_a {
            c.engine.selection.max_instructions = v;
        }
        if let Some(v) = self.k_b {
            c.engine.selection.max_tools = v;
        }
        if let Some(v) = self.tau {
            c.engine.gate.tau = v;
        }
        if let Some(v) = self.discovery {
            c.engine.gate.discovery_policy = match v {
                DiscoveryArg::ExpandKb => DiscoveryPolicy::ExpandKb,
                DiscoveryArg::CatalogSummary => DiscoveryPolicy::CatalogSummary,
            };
        }
        if let Some(v) = self.cache_capacity {
            c.cache_capacity = v;
        }
        if let Some(v) = &self.telemetry {
            c.telemetry = Some(v.clone());
        }
        if let Some(url) = &self.model_url {
            c.model = ModelConfig::Callback {
                url: url.clone(),
                timeout_ms: 30_000,
            };
        } else if let Some(confidence) = self.mock_confidence {
            c.model = ModelConfig::Mock { confidence };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn runtime(&self) -> Result<Runtime, CliError> {
        Runtime::load(self.resolve()?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    pub query: String,
    #[arg(long)]
    pub domain: Option<String>,
    /// Tokens of prior history counted into the prompt.
    #[arg(long, default_value_t = 0)]
    pub history_tokens: u64,
}

impl QueryArgs {
    fn step_query(&self) -> StepQuery {
        StepQuery {
            query: self.query.clone(),
            domain_hint: self.domain.clone(),
            history_tokens: Some(self.history_tokens),
            ..Default::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, chunk and validate a corpus, then write it as one JSONL file.
    Ingest {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the indices and print their summaries.
    Index {
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Top-M candidates for a query.
    Retrieve {
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        q: QueryArgs,
    },
    /// Budgeted selection for a query.
    Select {
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        q: QueryArgs,
    },
    /// The prompt one step would send.
    Assemble {
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// One full step, gate and fallback included.
    Step {
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long, default_value = "cli-1")]
        step_id: String,
    },
    /// Run a simulation scenario and print the metrics tables.
    Simulate {
        /// Scenario JSON; built-in defaults otherwise.
        #[arg(long, env = "ITR_SCENARIO")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "text")]
        format: String,
        /// Write every episode trace here as JSON Lines.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Cost-model tables.
    CostReport {
        #[arg(long, value_enum, default_value = "all")]
        preset: CostPreset,
        #[arg(long, default_value_t = 15)]
        steps: u64,
        #[arg(long, default_value_t = DEFAULT_HISTORY_GROWTH)]
        history_growth: u64,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: u64,
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Recompute the headline arithmetic; exits 3 if any check fails.
    ConsistencyCheck {
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Run the HTTP sidecar.
    Serve {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, env = "ITR_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

fn format_arg(s: &str) -> Result<ReportFormat, CliError> {
    s.parse().map_err(CliError::config)
}

/// Executes a verb and returns what to print on stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Ingest { engine, out } => {
            let config = engine.resolve()?;
            let corpus = load_corpus(config.corpus.as_deref().expect("validated"), config.system_prompt.as_deref())?;
            let report = validate_corpus(&corpus);
            if report.has_errors() {
                return Err(CliError::Data(json(&report.issues)));
            }
            save_jsonl(&corpus, &out).map_err(CliError::data)?;
            Ok(json(&serde_json::json!({
                "out": out,
                "corpus_version": corpus.version.to_string(),
                "fragments": corpus.fragments.len(),
                "tools": corpus.tools.len(),
                "instruction_tokens": corpus.total_instruction_tokens(),
                "tool_tokens": corpus.total_tool_tokens(),
                "warnings": report.issues,
            })))
        }
        Command::Index { engine } => {
            let rt = engine.runtime()?;
            Ok(json(&serde_json::json!({
                "corpus_version": rt.corpus.version.to_string(),
                "embedder": rt.index.embedder_id(),
                "indices": rt.index.summaries(),
            })))
        }
        Command::Retrieve { engine, q } => {
            let rt = engine.runtime()?;
            Ok(json(&rt.engine.retrieve(&q.query).map_err(CliError::data)?))
        }
        Command::Select { engine, q } => {
            let rt = engine.runtime()?;
            let (plan, _) = rt.engine.plan(&q.step_query()).map_err(CliError::data)?;
            Ok(json(&plan.selection))
        }
        Command::Assemble { engine, q, format } => {
            let format = format_arg(&format)?;
            let rt = engine.runtime()?;
            let (plan, _) = rt.engine.plan(&q.step_query()).map_err(CliError::data)?;
            let prompt = rt
                .engine
                .assemble(&rt.engine.expose(&plan.selection), q.history_tokens)
                .map_err(CliError::data)?;
            Ok(match format {
                ReportFormat::Text => prompt.render(),
                ReportFormat::Json => json(&prompt.to_json()),
            })
        }
        Command::Step { engine, q, step_id } => {
            let rt = engine.runtime()?;
            let mut client = rt.config.model.client();
            let r = rt
                .engine
                .step(&q.step_query(), client.as_mut(), &step_id)
                .map_err(CliError::data)?;
            Ok(json(&r))
        }
        Command::Simulate {
            scenario,
            episodes,
            seed,
            format,
            traces,
        } => {
            let format = format_arg(&format)?;
            let mut s = match scenario {
                Some(p) => Scenario::load(&p).map_err(CliError::config)?,
                None => Scenario::default(),
            };
            if let Some(e) = episodes {
                s.episodes = e;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let out = run_benchmark(&s).map_err(CliError::config)?;
            if let Some(path) = traces {
                let file = std::fs::File::create(&path)
                    .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
                let mut w = std::io::BufWriter::new(file);
                for t in &out.traces {
                    writeln!(w, "{}", serde_json::to_string(t).expect("trace serializes")).map_err(CliError::data)?;
                }
                w.flush().map_err(CliError::data)?;
            }
            let mut tables = vec![metrics_report(&out.table), catalog_scaling_report(&out.table)];
            if !out.table.mixed.is_empty() {
                tables.push(mixed_report(&out.table));
            }
            Ok(render_all(&tables, format))
        }
        Command::CostReport {
            preset,
            steps,
            history_growth,
            window,
            format,
        } => {
            let format = format_arg(&format)?;
            if history_growth == 0 {
                return Err(CliError::config("history growth must be positive"));
            }
            let mut tables = Vec::new();
            if matches!(preset, CostPreset::MaxLoops | CostPreset::All) {
                tables.push(max_loops_report(&max_loops_table(window, ITR_STATIC_TOKENS, history_growth)));
            }
            if matches!(preset, CostPreset::Compounding | CostPreset::All) {
                let params = CostParams::reference().with_history_growth(history_growth);
                tables.push(compounding_report(&compounding_series(steps, &params)));
            }
            Ok(render_all(&tables, format))
        }
        Command::ConsistencyCheck { format } => {
            let format = format_arg(&format)?;
            let checks = consistency_report();
            let text = consistency_table(&checks).render(format);
            if checks.iter().all(|c| c.pass) {
                Ok(text)
            } else {
                Err(CliError::Data(text))
            }
        }
        Command::Serve { engine, bind } => {
            let rt = engine.runtime()?;
            let state = Arc::new(AppState::new(rt));
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(CliError::config)?;
            runtime.block_on(serve(state, bind))?;
            Ok(String::new())
        }
    }
}
