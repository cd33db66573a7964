use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use super::memory::{Feedback, MemoryError, MemoryFilter, MemoryStore, Rating};
use super::{engines_for_graph, load_engines, ServiceConfig, ServiceError};
use crate::ingest;
use crate::kblam::MAX_HOPS;
use crate::kgraph::{self, KnowledgeGraph};
use crate::router::{dispatch, route_with_override, Backend, Engines, RouterError};

pub struct AppState {
    pub config: ServiceConfig,
    engines: RwLock<Arc<Engines>>,
    pub memory: MemoryStore,
    jobs: Mutex<BTreeMap<u64, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig, engines: Engines) -> Result<Arc<Self>, ServiceError> {
        let memory = MemoryStore::open(&config.server.memory)?;
        Ok(Arc::new(Self {
            config,
            engines: RwLock::new(Arc::new(engines)),
            memory,
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
        }))
    }

    /// The engines currently served; replaced wholesale after an ingest job.
    pub fn engines(&self) -> Arc<Engines> {
        self.engines.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn set_job(&self, status: JobStatus) {
        self.jobs.lock().unwrap_or_else(|p| p.into_inner()).insert(status.job_id, status);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: u64,
    pub state: JobState,
    pub submitted_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_version: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changed_files: Option<Vec<String>>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({"status": "ok", "graph_version": s.engines().graph.version}))
}

async fn graph_stats(State(s): State<Arc<AppState>>) -> Json<Value> {
    let e = s.engines();
    Json(json!({
        "graph_version": e.graph.version,
        "provenance": e.graph.provenance,
        "stats": e.graph.stats(),
        "engines": {
            "deepgraph": e.deepgraph.is_some(),
            "kblam": e.kblam.is_some(),
            "embedding": e.index.is_some(),
        },
    }))
}

async fn node(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let e = s.engines();
    match e.graph.index_of(&id) {
        Some(i) => Json(json!({
            "graph_version": e.graph.version,
            "node": e.graph.node_at(i),
            "degree": e.graph.degree(i),
        }))
        .into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown node {id}")),
    }
}

#[derive(Deserialize)]
struct SubgraphParams {
    center: String,
    hops: Option<usize>,
    limit: Option<usize>,
}

/// BFS neighbourhood of `center`, truncated in BFS order (ids within a layer).
pub(crate) fn subgraph_json(graph: &KnowledgeGraph, center: usize, hops: usize, limit: usize) -> Value {
    let all = graph.neighborhood(center, hops, None);
    let kept = graph.neighborhood(center, hops, Some(limit));
    let frag = graph.fragment(&kept);
    json!({
        "center": graph.node_at(center).id,
        "hops": hops,
        "limit": limit,
        "truncated": kept.len() < all.len(),
        "graph_version": graph.version,
        "nodes": frag.nodes,
        "edges": frag.edges,
    })
}

async fn subgraph(State(s): State<Arc<AppState>>, Query(p): Query<SubgraphParams>) -> Response {
    let hops = p.hops.unwrap_or(1);
    if hops > MAX_HOPS {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("hops must be between 0 and {MAX_HOPS}"));
    }
    let e = s.engines();
    let Some(center) = e.graph.index_of(&p.center) else {
        return error(StatusCode::NOT_FOUND, format!("unknown node {}", p.center));
    };
    let limit = p.limit.unwrap_or(s.config.server.subgraph_limit).max(1);
    Json(subgraph_json(&e.graph, center, hops, limit)).into_response()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query: String,
    #[serde(default)]
    pub backend_override: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

async fn query(State(s): State<Arc<AppState>>, Json(req): Json<QueryRequest>) -> Response {
    if req.query.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "query is empty");
    }
    let backend = match req.backend_override.as_deref() {
        None => None,
        Some(name) => match Backend::parse(name) {
            Some(b) => Some(b),
            None => return error(StatusCode::BAD_REQUEST, format!("unknown backend {name}")),
        },
    };
    let k = req.k.unwrap_or(s.config.server.default_k).clamp(1, 100);
    let state = s.clone();
    let work = tokio::task::spawn_blocking(move || {
        let engines = state.engines();
        let decision = route_with_override(&req.query, backend, &state.config.router);
        let answer = dispatch(&decision, &req.query, &engines, k)?;
        let record = state.memory.append(&answer).map_err(|e| RouterError::Backend(e.to_string()))?;
        Ok::<_, RouterError>((record.record_id, answer))
    });
    match work.await {
        Ok(Ok((record_id, answer))) => {
            let mut v = serde_json::to_value(&answer).expect("answers serialise");
            v["record_id"] = json!(record_id);
            Json(v).into_response()
        }
        Ok(Err(RouterError::BackendUnavailable(name))) => {
            error(StatusCode::SERVICE_UNAVAILABLE, format!("backend unavailable: {name}"))
        }
        Ok(Err(RouterError::EmptyQuery)) => error(StatusCode::BAD_REQUEST, "query is empty"),
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => internal(e),
    }
}

#[derive(Deserialize)]
struct FeedbackRequest {
    record_id: u64,
    rating: Rating,
    #[serde(default)]
    comment: Option<String>,
}

async fn feedback(State(s): State<Arc<AppState>>, Json(req): Json<FeedbackRequest>) -> Response {
    let fb = Feedback { rating: req.rating, comment: req.comment };
    let state = s.clone();
    match tokio::task::spawn_blocking(move || state.memory.record_feedback(req.record_id, fb)).await {
        Ok(Ok(record)) => Json(record).into_response(),
        Ok(Err(e @ MemoryError::UnknownRecord(_))) => error(StatusCode::NOT_FOUND, e.to_string()),
        Ok(Err(e @ MemoryError::FeedbackConflict(_))) => error(StatusCode::CONFLICT, e.to_string()),
        Ok(Err(e)) => internal(e),
        Err(e) => internal(e),
    }
}

#[derive(Deserialize)]
struct MemoryParams {
    since: Option<String>,
    backend: Option<String>,
}

async fn memory(State(s): State<Arc<AppState>>, Query(p): Query<MemoryParams>) -> Response {
    let since = match p.since.as_deref().map(DateTime::parse_from_rfc3339) {
        None => None,
        Some(Ok(t)) => Some(t.with_timezone(&Utc)),
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, format!("since: {e}")),
    };
    let backend = match p.backend.as_deref() {
        None => None,
        Some(b) => match Backend::parse(b) {
            Some(b) => Some(b),
            None => return error(StatusCode::BAD_REQUEST, format!("unknown backend {b}")),
        },
    };
    Json(s.memory.list(&MemoryFilter { since, backend })).into_response()
}

#[derive(Deserialize, Default)]
struct IngestRequest {
    repo: Option<PathBuf>,
    pr_source: Option<String>,
}

fn run_ingest(state: &AppState, repo: PathBuf, pr_source: Option<String>) -> Result<JobStatus, String> {
    let mut options = state.config.ingest.options.clone();
    if pr_source.is_some() {
        options.pr_source = pr_source;
    }
    let prs = ingest::pr_source_from_config(&options);
    let snap = ingest::snapshot(&repo, prs.as_ref(), &options).map_err(|e| e.to_string())?;
    let current = state.engines();
    let (graph, changed) = if current.graph.provenance.repo_id == snap.repo_id {
        let (g, report) = kgraph::apply_delta(&current.graph, &snap).map_err(|e| e.to_string())?;
        (g, report.changed_files)
    } else {
        (kgraph::build_graph(&snap).map_err(|e| e.to_string())?, Vec::new())
    };
    kgraph::export_json(&graph, &state.config.engines.graph).map_err(|e| e.to_string())?;
    let version = graph.version;
    let engines = engines_for_graph(graph, &state.config.engines, current.encoder.clone()).map_err(|e| e.to_string())?;
    *state.engines.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(engines);
    Ok(JobStatus {
        job_id: 0,
        state: JobState::Succeeded,
        submitted_at: Utc::now(),
        finished_at: Some(Utc::now()),
        error: None,
        graph_version: Some(version),
        changed_files: Some(changed),
    })
}

async fn start_ingest(State(s): State<Arc<AppState>>, body: Option<Json<IngestRequest>>) -> Response {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let Some(repo) = req.repo.or_else(|| s.config.ingest.repo.clone()) else {
        return error(StatusCode::BAD_REQUEST, "no repository given and none configured");
    };
    let job_id = s.next_job.fetch_add(1, Ordering::SeqCst);
    let queued = JobStatus {
        job_id,
        state: JobState::Queued,
        submitted_at: Utc::now(),
        finished_at: None,
        error: None,
        graph_version: None,
        changed_files: None,
    };
    s.set_job(queued.clone());
    let state = s.clone();
    tokio::task::spawn_blocking(move || {
        state.set_job(JobStatus { state: JobState::Running, ..queued.clone() });
        let done = match run_ingest(&state, repo, req.pr_source) {
            Ok(r) => JobStatus { job_id, submitted_at: queued.submitted_at, ..r },
            Err(e) => JobStatus { state: JobState::Failed, finished_at: Some(Utc::now()), error: Some(e), ..queued },
        };
        state.set_job(done);
    });
    (StatusCode::ACCEPTED, Json(json!({"job_id": job_id}))).into_response()
}

async fn job(State(s): State<Arc<AppState>>, Path(id): Path<u64>) -> Response {
    match s.jobs.lock().unwrap_or_else(|p| p.into_inner()).get(&id) {
        Some(j) => Json(j.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown job {id}")),
    }
}

pub fn app(state: Arc<AppState>) -> Router {
    let mut router = Router::new()
        .route("/health", get(health))
        .route("/graph/stats", get(graph_stats))
        .route("/node/{*id}", get(node))
        .route("/subgraph", get(subgraph))
        .route("/query", post(query))
        .route("/feedback", post(feedback))
        .route("/memory", get(memory))
        .route("/ingest", post(start_ingest))
        .route("/jobs/{id}", get(job));
    if let Some(dir) = &state.config.server.ui_dir {
        router = router.nest_service("/ui", ServeDir::new(dir));
    }
    router.with_state(state)
}

/// Loads every configured artifact, then serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let section = config.engines.clone();
    let engines = tokio::task::spawn_blocking(move || load_engines(&section))
        .await
        .map_err(|e| ServiceError::Config(e.to_string()))??;
    let bind = config.server.bind.clone();
    let state = AppState::new(config, engines)?;
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
