//! Runtime configuration: a JSON file, overridden by flags and `ITR_*`
//! environment variables.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use itr_core::cache::{SelectionCache, DEFAULT_CAPACITY};
use itr_core::corpus::{load_dir, load_jsonl, ChunkOptions, Corpus};
use itr_core::engine::{Engine, EngineConfig};
use itr_core::index::{build_indices, HashingEmbedder, IndexBundle, DEFAULT_DIM};
use itr_core::telemetry::JsonlSink;
use itr_core::tokenize::QuarterCharCounter;

use crate::model::ModelConfig;

/// Errors carry the process exit code: 2 for configuration, 3 for data.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// A `.jsonl` corpus file or a directory of them.
    pub corpus: Option<PathBuf>,
    /// Raw system prompt chunked into extra fragments when loading a directory.
    pub system_prompt: Option<PathBuf>,
    pub engine: EngineConfig,
    /// 0 disables the selection cache.
    pub cache_capacity: usize,
    /// JSON Lines telemetry file, appended to.
    pub telemetry: Option<PathBuf>,
    pub model: ModelConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            corpus: None,
            system_prompt: None,
            engine: EngineConfig::default(),
            cache_capacity: DEFAULT_CAPACITY,
            telemetry: None,
            model: ModelConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks values and that every referenced path exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let corpus = self
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::config("no corpus given (--corpus or ITR_CORPUS)"))?;
        if !corpus.exists() {
            return Err(CliError::Config(format!("corpus path {} does not exist", corpus.display())));
        }
        if let Some(p) = &self.system_prompt {
            if !p.is_file() {
                return Err(CliError::Config(format!("system prompt {} does not exist", p.display())));
            }
        }
        if let Some(parent) = self.telemetry.as_ref().and_then(|p| p.parent()) {
            if !parent.as_os_str().is_empty() && !parent.is_dir() {
                return Err(CliError::Config(format!("telemetry directory {} does not exist", parent.display())));
            }
        }
        self.engine.gate.validate().map_err(CliError::config)?;
        self.engine.retrieval.weights.validate().map_err(CliError::config)?;
        if self.engine.retrieval.m_a == 0 || self.engine.retrieval.m_b == 0 {
            return Err(CliError::config("retrieval depths must be at least 1"));
        }
        self.model.validate()
    }
}

pub fn load_corpus(path: &Path, system_prompt: Option<&Path>) -> Result<Corpus, CliError> {
    let counter = QuarterCharCounter;
    if path.is_dir() {
        load_dir(path, system_prompt, &ChunkOptions::default(), &counter).map_err(CliError::data)
    } else {
        load_jsonl(path, &counter).map_err(CliError::data)
    }
}

/// A loaded corpus, its indices and a configured engine.
pub struct Runtime {
    pub config: ServiceConfig,
    pub corpus: Arc<Corpus>,
    pub index: Arc<IndexBundle>,
    pub engine: Arc<Engine>,
}

impl Runtime {
    pub fn load(config: ServiceConfig) -> Result<Self, CliError> {
        config.validate()?;
        let path = config.corpus.as_deref().expect("validated");
        let corpus = Arc::new(load_corpus(path, config.system_prompt.as_deref())?);
        Runtime::from_corpus(config, corpus)
    }

    pub fn from_corpus(config: ServiceConfig, corpus: Arc<Corpus>) -> Result<Self, CliError> {
        let index = Arc::new(
            build_indices(&corpus, Arc::new(HashingEmbedder::default()), DEFAULT_DIM).map_err(CliError::data)?,
        );
        let mut engine = Engine::new(corpus.clone(), index.clone(), config.engine.clone())
            .with_cache(Arc::new(SelectionCache::new(config.cache_capacity)));
        if let Some(path) = &config.telemetry {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| CliError::Config(format!("cannot open telemetry file {}: {e}", path.display())))?;
            engine = engine.with_sink(Arc::new(JsonlSink::new(file)));
        }
        Ok(Runtime {
            config,
            corpus,
            index,
            engine: Arc::new(engine),
        })
    }
}
