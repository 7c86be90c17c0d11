//! HTTP service exposing optimization sessions to a human decision maker.
//!
//! Endpoints (JSON in and out):
//!
//! | method | path | purpose |
//! |---|---|---|
//! | POST | `/sessions` | create a session, `201` with its id |
//! | GET | `/sessions/{id}` | state summary |
//! | GET | `/sessions/{id}/query?kind=pc\|ir` | next preference query |
//! | POST | `/sessions/{id}/answer` | answer the pending query |
//! | GET | `/sessions/{id}/suggest` | next candidate to evaluate |
//! | POST | `/sessions/{id}/observe` | report an evaluation |
//!
//! Errors carry `{"error": message, "code": kind}`. Each session is guarded
//! by its own lock; a request that finds the session busy gets `409`. With a
//! data directory, every mutation writes a JSON snapshot that is reloaded on
//! start.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use prefmobo::active::QueryKind;
use prefmobo::benchmarks::{BenchmarkName, DtlzNorm};
use prefmobo::engine::{Answer, ObjectiveScale, PcChoice, Session, SessionConfig, SessionSummary};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("session '{0}' not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl From<prefmobo::Error> for ApiError {
    fn from(e: prefmobo::Error) -> Self {
        use prefmobo::Error as E;
        match e {
            E::InvalidArgument(_) | E::Config(_) | E::Json(_) => ApiError::BadRequest(e.to_string()),
            E::Conflict(_) => ApiError::Conflict(e.to_string()),
            E::Numerical(_) | E::Io(_) => ApiError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.parts();
        (status, Json(serde_json::json!({ "error": self.to_string(), "code": code }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ObjectiveBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub minimize: bool,
}

/// Body of `POST /sessions`. Either `benchmark` or the external-mode fields
/// (`candidates`, `objective_bounds`) must be given; the remaining fields are
/// the session configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub benchmark: Option<BenchmarkName>,
    #[serde(default)]
    pub dtlz_norm: DtlzNorm,
    /// Optional consistency checks on the problem shape.
    #[serde(default)]
    pub n_objectives: Option<usize>,
    #[serde(default)]
    pub input_dim: Option<usize>,
    #[serde(default)]
    pub candidates: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub input_bounds: Option<Bounds>,
    #[serde(default)]
    pub objective_bounds: Option<ObjectiveBounds>,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub query_id: u64,
    #[serde(default)]
    pub preferred: Option<PcChoice>,
    #[serde(default)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveRequest {
    pub x: Vec<f64>,
    /// Objective values in original units; optional for benchmark sessions.
    #[serde(default)]
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateResponse {
    pub id: String,
    #[serde(flatten)]
    pub summary: SessionSummary,
}

type SessionCell = Arc<Mutex<Session>>;

/// Shared service state: the live sessions and the snapshot directory.
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, SessionCell>>>,
    data_dir: Option<PathBuf>,
}

impl AppState {
    /// In-memory sessions only.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Sessions persisted under `dir`; existing snapshots are loaded.
    pub fn with_data_dir(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else { continue };
            let text = std::fs::read_to_string(&path)?;
            match Session::from_json(&text) {
                Ok(s) => {
                    sessions.insert(id, Arc::new(Mutex::new(s)));
                }
                Err(e) => log::warn!("skipping snapshot {}: {e}", path.display()),
            }
        }
        Ok(Self { sessions: Arc::new(RwLock::new(sessions)), data_dir: Some(dir) })
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn get(&self, id: &str) -> ApiResult<SessionCell> {
        self.sessions.read().expect("session map").get(id).cloned().ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    fn persist(&self, id: &str, session: &Session) -> ApiResult<()> {
        let Some(dir) = &self.data_dir else { return Ok(()) };
        write_snapshot(dir, id, session).map_err(|e| ApiError::Internal(format!("snapshot failed: {e}")))
    }
}

fn write_snapshot(dir: &Path, id: &str, session: &Session) -> std::io::Result<()> {
    let json = session.to_json().map_err(std::io::Error::other)?;
    let tmp = dir.join(format!("{id}.json.tmp"));
    std::fs::write(&tmp, json)?;
    std::fs::rename(tmp, dir.join(format!("{id}.json")))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))
}

/// Runs `op` on the session off the async runtime. `mutates` selects
/// optimistic locking (busy → 409) and a snapshot afterwards.
async fn with_session<T, F>(state: &AppState, id: String, mutates: bool, op: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
{
    let cell = state.get(&id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = if mutates {
            match cell.try_lock() {
                Ok(g) => g,
                Err(TryLockError::WouldBlock) => {
                    return Err(ApiError::Conflict("session is busy with another request".into()))
                }
                Err(TryLockError::Poisoned(_)) => return Err(ApiError::Internal("session state poisoned".into())),
            }
        } else {
            cell.lock().map_err(|_| ApiError::Internal("session state poisoned".into()))?
        };
        let out = op(&mut guard)?;
        if mutates {
            state.persist(&id, &guard)?;
        }
        Ok(out)
    })
    .await
    .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

fn build_session(req: CreateRequest) -> ApiResult<Session> {
    if req.n_objectives == Some(0) {
        return Err(ApiError::BadRequest("n_objectives must be at least 1".into()));
    }
    if req.input_dim == Some(0) {
        return Err(ApiError::BadRequest("input_dim must be at least 1".into()));
    }
    let session = match req.benchmark {
        Some(name) => {
            if req.candidates.is_some() || req.objective_bounds.is_some() {
                return Err(ApiError::BadRequest("benchmark sessions take no candidates or objective bounds".into()));
            }
            Session::benchmark(req.config, name, req.dtlz_norm)?
        }
        None => {
            let candidates = req
                .candidates
                .ok_or_else(|| ApiError::BadRequest("either benchmark or candidates is required".into()))?;
            let ob = req
                .objective_bounds
                .ok_or_else(|| ApiError::BadRequest("external mode requires objective_bounds".into()))?;
            let scale = ObjectiveScale::new(ob.lower, ob.upper, ob.minimize)?;
            Session::external(req.config, candidates, req.input_bounds.map(|b| (b.lower, b.upper)), scale)?
        }
    };
    if let Some(l) = req.n_objectives {
        if l != session.n_objectives {
            return Err(ApiError::BadRequest(format!(
                "n_objectives {l} does not match the problem ({})",
                session.n_objectives
            )));
        }
    }
    if let Some(d) = req.input_dim {
        if d != session.input_dim() {
            return Err(ApiError::BadRequest(format!("input_dim {d} does not match the problem ({})", session.input_dim())));
        }
    }
    Ok(session)
}

async fn create(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<StateResponse>)> {
    let req: CreateRequest = parse_body(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let (session, summary) = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let mut s = build_session(req)?;
        let summary = s.summary()?;
        Ok((s, summary))
    })
    .await
    .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))??;
    state.persist(&id, &session)?;
    state.sessions.write().expect("session map").insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(StateResponse { id, summary })))
}

async fn get_state(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StateResponse>> {
    let sid = id.clone();
    let summary = with_session(&state, id, false, |s| Ok(s.summary()?)).await?;
    Ok(Json(StateResponse { id: sid, summary }))
}

async fn next_query(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(params): UrlQuery<HashMap<String, String>>,
) -> ApiResult<Response> {
    let kind: QueryKind = params
        .get("kind")
        .ok_or_else(|| ApiError::BadRequest("query parameter 'kind' (pc or ir) is required".into()))?
        .parse()?;
    let payload = with_session(&state, id, true, move |s| Ok(s.next_query(kind)?)).await?;
    Ok(Json(payload).into_response())
}

async fn answer(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let req: AnswerRequest = parse_body(&body)?;
    let ans = match (req.preferred, req.dim) {
        (Some(p), None) => Answer::Pc { preferred: p },
        (None, Some(d)) => Answer::Ir { dim: d },
        _ => return Err(ApiError::BadRequest("give exactly one of 'preferred' or 'dim'".into())),
    };
    let sid = id.clone();
    let summary = with_session(&state, id, true, move |s| {
        s.answer(req.query_id, ans)?;
        Ok(s.summary()?)
    })
    .await?;
    Ok(Json(StateResponse { id: sid, summary }).into_response())
}

async fn suggest(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = with_session(&state, id, true, |s| Ok(s.suggest()?)).await?;
    Ok(Json(s).into_response())
}

async fn observe(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let req: ObserveRequest = parse_body(&body)?;
    let (n, count) = with_session(&state, id, true, move |s| {
        let n = s.observe(req.x, req.y)?;
        Ok((n, s.observations.len()))
    })
    .await?;
    Ok(Json(serde_json::json!({ "observation": n, "n_observations": count })).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/query", get(next_query))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/suggest", get(suggest))
        .route("/sessions/{id}/observe", post(observe))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
