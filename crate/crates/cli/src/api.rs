//! HTTP API consumed by the review UI.
//!
//! Generation runs on a blocking worker against a copy of the session, so a
//! poll never waits for the model: it sees `awaiting_llm` until the copy is
//! written back.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::task::JoinHandle;
use trajedit_core::{Scene, Trajectory};
use trajedit_engine::dataset::{run_eval, Category, EvalConfig, EvalReport, Sample};
use trajedit_engine::llm::{LiveTransport, Transport, TransportKind};
use trajedit_engine::session::{
    Session, SessionConfig, SessionError, SessionState, UserVerdict, Verdict,
};

use crate::fixture_slug;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationView {
    pub index: usize,
    pub plan: Option<String>,
    pub code: Option<String>,
    pub verdict: Verdict,
    pub error: Option<String>,
    pub adapted: Option<Trajectory>,
}

/// What the UI polls. Trajectories use the trajectory file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub instruction: String,
    pub state: SessionState,
    pub scene: Scene,
    pub original: Trajectory,
    /// Preview from the latest iteration, if it executed.
    pub adapted: Option<Trajectory>,
    pub final_trajectory: Option<Trajectory>,
    pub plan: Option<String>,
    pub code: Option<String>,
    pub error: Option<String>,
    pub feedback_history: Vec<String>,
    pub iterations: Vec<IterationView>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        let iterations: Vec<IterationView> = s
            .iterations
            .iter()
            .enumerate()
            .map(|(index, it)| IterationView {
                index,
                plan: it.proposal.as_ref().map(|p| p.high_level_plan.clone()),
                code: it.proposal.as_ref().map(|p| p.code.clone()),
                verdict: it.verdict.clone(),
                error: it.error_text(),
                adapted: it.adapted().cloned(),
            })
            .collect();
        let last = iterations.last();
        SessionView {
            id: s.id.clone(),
            instruction: s.instruction.clone(),
            state: s.state,
            scene: s.scene.clone(),
            original: s.original.clone(),
            adapted: s.latest_adapted().cloned(),
            final_trajectory: s.final_trajectory().cloned(),
            plan: last.and_then(|i| i.plan.clone()),
            code: last.and_then(|i| i.code.clone()),
            error: s.latest_error(),
            feedback_history: s.feedback_history(),
            iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub id: String,
    pub instruction: String,
    pub category: Category,
    pub fixture_id: String,
    pub checks: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub instruction: Option<String>,
    #[serde(default)]
    pub scene: Option<Scene>,
    #[serde(default)]
    pub trajectory: Option<Trajectory>,
    #[serde(default)]
    pub sample_id: Option<String>,
    #[serde(default)]
    pub fixture_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRequest {
    pub approve: bool,
    #[serde(default)]
    pub feedback: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    #[serde(default = "default_llm")]
    pub llm: TransportKind,
    #[serde(default)]
    pub parallelism: usize,
}

fn default_llm() -> TransportKind {
    TransportKind::Mock
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: format!("no {what} with id '{id}'"),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::InvalidState { .. } => StatusCode::CONFLICT,
            SessionError::EmptyFeedback | SessionError::EmptyInstruction => StatusCode::BAD_REQUEST,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

/// Parses a JSON body, naming the offending field on failure.
pub fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ApiError::bad_request(format!("malformed JSON body: {inner}"))
        } else if path == "." {
            ApiError::bad_request(inner.to_string())
        } else {
            ApiError::bad_request(format!("{path}: {inner}"))
        }
    })
}

type Entry = Arc<Mutex<Session>>;

pub struct ServiceConfig {
    pub transport: Arc<dyn Transport>,
    pub session: SessionConfig,
    pub corpus: Vec<Sample>,
}

struct Inner {
    sessions: RwLock<HashMap<String, Entry>>,
    next_id: AtomicU64,
    transport: Arc<dyn Transport>,
    session: SessionConfig,
    corpus: Vec<Sample>,
    eval_queue: tokio::sync::Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        AppState(Arc::new(Inner {
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            transport: cfg.transport,
            session: cfg.session,
            corpus: cfg.corpus,
            eval_queue: tokio::sync::Mutex::new(()),
        }))
    }

    fn entry(&self, id: &str) -> Result<Entry, ApiError> {
        self.0
            .sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn snapshot(&self, id: &str) -> Option<Session> {
        self.entry(id).ok().map(|e| e.lock().unwrap().clone())
    }

    /// Runs generation on a copy and writes it back when done.
    fn spawn_generation(&self, entry: Entry) -> JoinHandle<()> {
        let transport = Arc::clone(&self.0.transport);
        tokio::task::spawn_blocking(move || {
            let mut work = entry.lock().unwrap().clone();
            // Only fails if the session left awaiting_llm, which nothing else does.
            let _ = work.generate_proposal(transport.as_ref());
            *entry.lock().unwrap() = work;
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/verdict", post(post_verdict))
        .route("/api/sessions/{id}/export", get(export_session))
        .route("/api/corpus", get(corpus))
        .route("/api/eval", post(eval))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(
    State(app): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let sample =
        match &req.sample_id {
            Some(id) => Some(app.0.corpus.iter().find(|s| &s.id == id).ok_or_else(|| {
                ApiError::bad_request(format!("sample_id: unknown sample '{id}'"))
            })?),
            None => None,
        };
    let instruction = match (req.instruction, sample) {
        (Some(i), _) => i,
        (None, Some(s)) => s.instruction.clone(),
        (None, None) => return Err(ApiError::bad_request("instruction: missing field")),
    };
    let scene = match (req.scene, sample) {
        (Some(sc), _) => sc,
        (None, Some(s)) => s.scene.clone(),
        (None, None) => Scene::empty(),
    };
    let original = match (req.trajectory, sample) {
        (Some(t), _) => t,
        (None, Some(s)) => s
            .trajectory()
            .map_err(|e| ApiError::bad_request(format!("sample_id: {e}")))?,
        (None, None) => return Err(ApiError::bad_request("trajectory: missing field")),
    };
    let fixture_id = req
        .fixture_id
        .or_else(|| sample.map(|s| s.fixture_key().to_string()))
        .unwrap_or_else(|| fixture_slug(&instruction));
    let id = format!("s{}", app.0.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session::new(
        id.clone(),
        instruction,
        scene,
        original,
        fixture_id,
        app.0.session.clone(),
    )
    .map_err(|e| ApiError::bad_request(format!("instruction: {e}")))?;
    let view = SessionView::from(&session);
    let entry = Arc::new(Mutex::new(session));
    app.0
        .sessions
        .write()
        .unwrap()
        .insert(id, Arc::clone(&entry));
    app.spawn_generation(entry);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let entry = app.entry(&id)?;
    let view = SessionView::from(&*entry.lock().unwrap());
    Ok(Json(view))
}

async fn export_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Session>, ApiError> {
    let entry = app.entry(&id)?;
    let s = entry.lock().unwrap().clone();
    Ok(Json(s))
}

async fn post_verdict(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let entry = app.entry(&id)?;
    let req: VerdictRequest = parse_body(&body)?;
    let verdict = match (req.approve, req.feedback) {
        (true, None) => UserVerdict::Approve,
        (true, Some(_)) => {
            return Err(ApiError::bad_request(
                "feedback: must be omitted when approve is true",
            ))
        }
        (false, Some(f)) if !f.trim().is_empty() => UserVerdict::Feedback(f),
        (false, _) => {
            return Err(ApiError::bad_request(
                "feedback: required when approve is false",
            ))
        }
    };
    let (view, regenerate) = {
        let mut s = entry.lock().unwrap();
        s.record_verdict(verdict)?;
        (SessionView::from(&*s), s.state == SessionState::AwaitingLlm)
    };
    if regenerate {
        app.spawn_generation(entry);
    }
    Ok(Json(view))
}

async fn corpus(State(app): State<AppState>) -> Json<Vec<SampleSummary>> {
    Json(
        app.0
            .corpus
            .iter()
            .map(|s| SampleSummary {
                id: s.id.clone(),
                instruction: s.instruction.clone(),
                category: s.category,
                fixture_id: s.fixture_key().to_string(),
                checks: s.checks.len(),
            })
            .collect(),
    )
}

async fn eval(State(app): State<AppState>, body: Bytes) -> Result<Json<EvalReport>, ApiError> {
    let req: EvalRequest = if body.is_empty() {
        parse_body(b"{}")?
    } else {
        parse_body(&body)?
    };
    let transport: Arc<dyn Transport> = match req.llm {
        TransportKind::Mock => Arc::clone(&app.0.transport),
        TransportKind::Live => {
            let cfg = trajedit_engine::llm::LlmConfig {
                transport: TransportKind::Live,
                ..app.0.session.llm.clone()
            };
            Arc::new(
                LiveTransport::new(&cfg).map_err(|e| ApiError::bad_request(format!("llm: {e}")))?,
            )
        }
    };
    let _turn = app.0.eval_queue.lock().await;
    let inner = Arc::clone(&app.0);
    let cfg = EvalConfig {
        session: inner.session.clone(),
        parallelism: req.parallelism,
    };
    let report =
        tokio::task::spawn_blocking(move || run_eval(&inner.corpus, &cfg, transport.as_ref()))
            .await
            .map_err(|e| ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: format!("eval worker failed: {e}"),
            })?;
    Ok(Json(report))
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
