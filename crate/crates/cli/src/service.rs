//! HTTP sidecar: JSON endpoints over one engine.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use itr_core::cache::CacheStats;
use itr_core::engine::{EngineError, StepQuery};
use itr_core::index::{DocKind, IndexError, IndexSummary};
use itr_core::selector::{greedy_select, SelectionCandidate, SelectionConfig, SelectionResult};

use crate::config::{CliError, Runtime};
use crate::model::ModelConfig;

pub struct AppState {
    pub runtime: Runtime,
    pub model: ModelConfig,
    steps: AtomicU64,
}

impl AppState {
    pub fn new(runtime: Runtime) -> Self {
        let model = runtime.config.model.clone();
        AppState {
            runtime,
            model,
            steps: AtomicU64::new(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match &e {
            EngineError::EmptyQuery | EngineError::Index(IndexError::EmptyQuery) => {
                (StatusCode::BAD_REQUEST, "empty_query")
            }
            EngineError::Index(_) => (StatusCode::BAD_REQUEST, "index_error"),
            EngineError::StaleIndex { .. } => (StatusCode::CONFLICT, "stale_index"),
            EngineError::MissingOverlay => (StatusCode::INTERNAL_SERVER_ERROR, "missing_overlay"),
            EngineError::Select(_) => (StatusCode::UNPROCESSABLE_ENTITY, "selection_error"),
            EngineError::Assemble(_) => (StatusCode::UNPROCESSABLE_ENTITY, "dangling_id"),
            EngineError::Gate(_) => (StatusCode::UNPROCESSABLE_ENTITY, "gate_error"),
            EngineError::Model(_) => (StatusCode::BAD_GATEWAY, "model_error"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))
}

#[derive(Debug, Deserialize)]
pub struct RetrieveRequest {
    pub query: String,
}

/// A candidate whose kind is implied by the list it is in.
#[derive(Debug, Clone, Deserialize)]
pub struct CandidateInput {
    pub id: String,
    pub gain: f64,
    pub token_cost: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct SelectRequest {
    /// Retrieve and select with the engine's configuration; candidate lists
    /// are then ignored.
    pub query: Option<String>,
    pub domain_hint: Option<String>,
    pub instructions: Vec<CandidateInput>,
    pub tools: Vec<CandidateInput>,
    pub config: Option<SelectionConfig>,
    pub pinned: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct AssembleRequest {
    pub selection: SelectionResult,
    pub history_tokens: u64,
}

#[derive(Debug, Serialize)]
pub struct AssembleResponse {
    pub text: String,
    pub prompt: serde_json::Value,
}

#[derive(Debug, Deserialize)]
pub struct StepRequest {
    #[serde(flatten)]
    pub query: StepQuery,
    /// Telemetry id; defaults to a per-process counter.
    #[serde(default)]
    pub step_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub corpus_version: String,
    pub cache: Option<CacheStats>,
    pub indices: Vec<IndexSummary>,
}

async fn retrieve(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<itr_core::index::Retrieved> {
    let req: RetrieveRequest = parse(&body)?;
    if req.query.trim().is_empty() {
        return Err(EngineError::EmptyQuery.into());
    }
    Ok(Json(st.runtime.engine.retrieve(&req.query)?))
}

async fn select(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<SelectionResult> {
    let req: SelectRequest = parse(&body)?;
    if let Some(query) = req.query {
        let q = StepQuery {
            query,
            domain_hint: req.domain_hint,
            ..Default::default()
        };
        return Ok(Json(st.runtime.engine.plan(&q)?.0.selection));
    }
    let pool = |items: &[CandidateInput], kind| {
        items
            .iter()
            .map(|c| SelectionCandidate::new(c.id.clone(), kind, c.gain, c.token_cost))
            .collect::<Vec<_>>()
    };
    let config = req.config.unwrap_or_else(|| st.runtime.config.engine.selection.clone());
    let pinned: BTreeSet<String> = req.pinned.into_iter().collect();
    let result = greedy_select(
        &pool(&req.instructions, DocKind::Instruction),
        &pool(&req.tools, DocKind::Tool),
        &config,
        &pinned,
    )
    .map_err(EngineError::from)?;
    Ok(Json(result))
}

async fn assemble(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<AssembleResponse> {
    let req: AssembleRequest = parse(&body)?;
    let prompt = st.runtime.engine.assemble(&req.selection, req.history_tokens)?;
    Ok(Json(AssembleResponse {
        text: prompt.render(),
        prompt: prompt.to_json(),
    }))
}

async fn step(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<itr_core::engine::StepResult> {
    let req: StepRequest = parse(&body)?;
    let n = st.steps.fetch_add(1, Ordering::Relaxed) + 1;
    let step_id = req.step_id.unwrap_or_else(|| format!("http-{n}"));
    let state = st.clone();
    // Callback clients block on network I/O.
    let result = tokio::task::spawn_blocking(move || {
        let mut client = state.model.client();
        state.runtime.engine.step(&req.query, client.as_mut(), &step_id)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(result))
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Health> {
    let engine = &st.runtime.engine;
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        corpus_version: engine.corpus().version.to_string(),
        cache: engine.cache().map(|c| c.stats()),
        indices: engine.index().summaries(),
    })
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/retrieve", post(retrieve))
        .route("/v1/select", post(select))
        .route("/v1/assemble", post(assemble))
        .route("/v1/step", post(step))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Config(format!("cannot bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(CliError::config)?;
    tracing::info!(%local, corpus = %state.runtime.corpus.version, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(CliError::data)
}
