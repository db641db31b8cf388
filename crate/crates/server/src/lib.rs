//! HTTP service over the session engine.
//!
//! A thin adapter: every mutating route turns its body into one engine
//! [`Command`] and runs it through [`Session::execute`], so the service adds no
//! behavior of its own. The acting user comes from the `X-Actor` header.
//! Mutations of one session are serialized by that session's lock; different
//! sessions proceed in parallel.

pub mod config;
pub mod error;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thematic_core::codelog::{MemoKind, MemoLink};
use thematic_core::interface::{self, export, ExportFormat};
use thematic_core::llm::{gateway_for, Gateway, LlmConfig};
use thematic_core::workflow::{Approval, Command, Outcome};
use thematic_core::{
    AnalysisSettings, CodeStatus, CodingMode, Ctx, EngineError, Phase, PhaseState, RevisionRequest, Session,
};
use tokio::sync::Mutex;

pub use config::ServerConfig;
pub use error::ApiError;

pub const ACTOR_HEADER: &str = "x-actor";

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

type Shared = Arc<Mutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Shared>>>,
    gateway: Gateway,
    clock: Clock,
    data_dir: Option<PathBuf>,
    llm: LlmConfig,
}

impl AppState {
    pub fn new(gateway: Gateway, llm: LlmConfig) -> Self {
        Self {
            sessions: Arc::default(),
            gateway,
            clock: Arc::new(Utc::now),
            data_dir: None,
            llm,
        }
    }

    /// Timestamps for new log entries; the wall clock by default.
    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Saves every session after each change and loads the ones already there.
    pub fn with_data_dir(mut self, dir: PathBuf) -> Result<Self, String> {
        std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let entries = std::fs::read_dir(&dir).map_err(|e| e.to_string())?;
        {
            let mut map = self.sessions.write().expect("session map lock");
            for entry in entries {
                let path = entry.map_err(|e| e.to_string())?.path();
                if path.to_string_lossy().ends_with(SESSION_SUFFIX) {
                    let s = interface::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    map.insert(s.id.to_string(), Arc::new(Mutex::new(s)));
                }
            }
        }
        self.data_dir = Some(dir);
        Ok(self)
    }

    pub fn from_config(config: &ServerConfig) -> Result<Self, String> {
        let gateway = gateway_for(&config.llm, config.fixtures_dir.as_deref()).map_err(|e| e.to_string())?;
        let state = Self::new(gateway, config.llm.clone());
        match &config.data_dir {
            Some(dir) => state.with_data_dir(dir.clone()),
            None => Ok(state),
        }
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        let map = self.sessions.read().expect("session map lock");
        map.get(id).cloned().ok_or_else(|| ApiError::session_not_found(id))
    }

    fn persist(&self, s: &Session) -> Result<(), EngineError> {
        if let Some(dir) = &self.data_dir {
            interface::save(s, &dir.join(format!("{}{SESSION_SUFFIX}", s.id)))?;
        }
        Ok(())
    }
}

const SESSION_SUFFIX: &str = ".session.json";

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/commands", post(post_command))
        .route("/sessions/{id}/transcript", post(load_transcript).get(get_transcript))
        .route("/sessions/{id}/phase", get(get_phase))
        .route("/sessions/{id}/phase/advance", post(advance))
        .route("/sessions/{id}/phase/revert", post(revert))
        .route("/sessions/{id}/phase/run", post(run_phase))
        .route("/sessions/{id}/codes", get(get_codes))
        .route("/sessions/{id}/gerunds", get(get_gerunds))
        .route("/sessions/{id}/families", get(get_families))
        .route("/sessions/{id}/themes", get(get_themes))
        .route("/sessions/{id}/memos", get(get_memos).post(record_memo))
        .route("/sessions/{id}/reflexive", post(reflexive))
        .route("/sessions/{id}/actions", post(revise).get(get_trail))
        .route("/sessions/{id}/integrity", post(validate_integrity).get(get_integrity))
        .route("/sessions/{id}/coverage", post(audit_coverage).get(get_coverage))
        .route("/sessions/{id}/summary", get(get_summary))
        .route("/sessions/{id}/log", get(get_log))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/exports/{name}", get(get_export))
        .with_state(state)
}

/// Binds the configured address and serves until the process ends.
pub async fn serve(config: ServerConfig) -> Result<(), String> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind).await.map_err(|e| format!("{}: {e}", config.bind))?;
    axum::serve(listener, router(state)).await.map_err(|e| e.to_string())
}

fn actor(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_owned)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "MissingActor", "the X-Actor header is required"))
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let bytes = if bytes.iter().all(u8::is_ascii_whitespace) { &b"{}"[..] } else { &bytes[..] };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct Mutation {
    pub outcome: Outcome,
    pub phase: PhaseState,
}

/// Runs one command against a session on a blocking thread; model calls may block.
async fn execute(state: &AppState, id: &str, actor: String, command: Command) -> Result<Json<Mutation>, ApiError> {
    let shared = state.session(id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = shared.blocking_lock();
        let ctx = Ctx::new(actor, (state.clock)());
        let outcome = s.execute(command, &ctx, &state.gateway)?;
        state.persist(&s)?;
        Ok(Json(Mutation { outcome, phase: s.phase.clone() }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
}

async fn read<T: Serialize>(state: &AppState, id: &str, f: impl FnOnce(&Session) -> T) -> Result<Json<T>, ApiError> {
    let shared = state.session(id)?;
    let s = shared.lock().await;
    Ok(Json(f(&s)))
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    research_question: String,
    #[serde(default = "default_mode")]
    coding_mode: CodingMode,
    #[serde(default)]
    settings: AnalysisSettings,
    llm: Option<LlmConfig>,
}

fn default_mode() -> CodingMode {
    CodingMode::ExactPlusDescriptive
}

#[derive(Debug, Serialize)]
struct SessionInfo {
    id: String,
    research_question: String,
    phase: Phase,
}

fn info(s: &Session) -> SessionInfo {
    SessionInfo { id: s.id.to_string(), research_question: s.research_question.clone(), phase: s.current_phase() }
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let actor = actor(&headers)?;
    let req: CreateSession = body(&raw)?;
    let ctx = Ctx::new(actor, (state.clock)());
    let llm = req.llm.unwrap_or_else(|| state.llm.clone());
    let s = Session::create(&req.research_question, req.coding_mode, llm, req.settings, &ctx)?;
    let id = s.id.to_string();
    {
        let mut map = state.sessions.write().expect("session map lock");
        if map.contains_key(&id) {
            return Err(ApiError::new(StatusCode::CONFLICT, "SessionExists", format!("session {id} already exists")));
        }
        state.persist(&s)?;
        map.insert(id, Arc::new(Mutex::new(s.clone())));
    }
    Ok((StatusCode::CREATED, Json(info(&s))))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionInfo>> {
    let shared: Vec<Shared> = state.sessions.read().expect("session map lock").values().cloned().collect();
    let mut out = Vec::new();
    for s in shared {
        out.push(info(&*s.lock().await));
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    read(&state, &id, Session::clone).await
}

async fn post_command(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    execute(&state, &id, actor, body(&raw)?).await
}

#[derive(Debug, Deserialize)]
struct TranscriptBody {
    #[serde(default)]
    title: String,
    text: String,
}

async fn load_transcript(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    let b: TranscriptBody = body(&raw)?;
    execute(&state, &id, actor, Command::LoadTranscript { title: b.title, text: b.text }).await
}

async fn get_transcript(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.lock().await;
    match &s.transcript {
        Some(t) => Ok(Json(t).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "NotComputed", "no transcript loaded")),
    }
}

async fn get_phase(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<PhaseState>, ApiError> {
    read(&state, &id, |s| s.phase.clone()).await
}

#[derive(Debug, Deserialize)]
struct AdvanceBody {
    approval: Option<Approval>,
}

async fn advance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    let b: AdvanceBody = body(&raw)?;
    execute(&state, &id, actor, Command::Advance { approval: b.approval }).await
}

#[derive(Debug, Deserialize)]
struct RevertBody {
    to: Phase,
    #[serde(default)]
    rationale: String,
}

async fn revert(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    let b: RevertBody = body(&raw)?;
    execute(&state, &id, actor, Command::Revert { to: b.to, rationale: b.rationale }).await
}

async fn run_phase(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    execute(&state, &id, actor, Command::RunPhase).await
}

async fn get_codes(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| serde_json::to_value(&s.codes).unwrap_or_default()).await?.into_response())
}

async fn get_gerunds(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| serde_json::to_value(&s.codes.gerunds).unwrap_or_default()).await?.into_response())
}

async fn get_families(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| serde_json::to_value(&s.codes.families).unwrap_or_default()).await?.into_response())
}

async fn get_themes(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| serde_json::to_value(&s.codes.themes).unwrap_or_default()).await?.into_response())
}

async fn get_memos(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| serde_json::to_value(&s.codes.memos).unwrap_or_default()).await?.into_response())
}

#[derive(Debug, Deserialize)]
struct MemoBody {
    kind: MemoKind,
    body: String,
    #[serde(default)]
    links: Vec<MemoLink>,
}

async fn record_memo(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    let b: MemoBody = body(&raw)?;
    execute(&state, &id, actor, Command::RecordMemo { kind: b.kind, body: b.body, links: b.links }).await
}

#[derive(Debug, Deserialize)]
struct ReflexiveBody {
    positionality: String,
}

async fn reflexive(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    let b: ReflexiveBody = body(&raw)?;
    execute(&state, &id, actor, Command::ReflexivePrompt { positionality: b.positionality }).await
}

async fn revise(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    let request: RevisionRequest = body(&raw)?;
    execute(&state, &id, actor, Command::Revise { request }).await
}

async fn get_trail(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| serde_json::to_value(&s.trail).unwrap_or_default()).await?.into_response())
}

async fn validate_integrity(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    execute(&state, &id, actor, Command::ValidateIntegrity).await
}

fn not_computed(what: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotComputed", format!("no {what} yet"))
}

async fn get_integrity(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.lock().await;
    s.integrity_report.as_ref().map(|r| Json(r).into_response()).ok_or_else(|| not_computed("integrity report"))
}

#[derive(Debug, Default, Deserialize)]
struct CoverageBody {
    #[serde(default)]
    include_statuses: Option<BTreeSet<CodeStatus>>,
}

async fn audit_coverage(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<Json<Mutation>, ApiError> {
    let actor = actor(&headers)?;
    let b: CoverageBody = body(&raw)?;
    execute(&state, &id, actor, Command::AuditCoverage { include_statuses: b.include_statuses }).await
}

async fn get_coverage(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.lock().await;
    s.coverage_report.as_ref().map(|r| Json(r).into_response()).ok_or_else(|| not_computed("coverage report"))
}

async fn get_summary(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| {
        let (header, rows) = export::action_summary_rows(&s.action_summary());
        serde_json::json!({"summary": s.action_summary(), "header": header, "rows": rows})
    })
    .await?
    .into_response())
}

async fn get_log(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(read(&state, &id, |s| serde_json::to_value(s.interaction_log.entries()).unwrap_or_default())
        .await?
        .into_response())
}

fn text(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

/// The report rendered at the end of the last phase, or a fresh rendering
/// of the current state before that.
async fn get_report(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.lock().await;
    let report = s.report.clone().unwrap_or_else(|| interface::render_report(&s));
    Ok(text("text/markdown; charset=utf-8", report))
}

async fn get_export(State(state): State<AppState>, Path((id, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    let shared = state.session(&id)?;
    let s = shared.lock().await;
    let rendered = match name.as_str() {
        "code-log.csv" => export::export_code_log(&s, ExportFormat::Csv).map(|b| text("text/csv; charset=utf-8", b)),
        "code-log.md" => {
            export::export_code_log(&s, ExportFormat::Markdown).map(|b| text("text/markdown; charset=utf-8", b))
        }
        "actions.csv" => export::action_summary_csv(&s.action_summary()).map(|b| text("text/csv; charset=utf-8", b)),
        "log.jsonl" => export::interaction_log_jsonl(&s).map(|b| text("application/x-ndjson", b)),
        "trail.jsonl" => export::trail_jsonl(&s.trail).map(|b| text("application/x-ndjson", b)),
        "session.json" => interface::save_string(&s).map(|b| text("application/json", b)),
        other => {
            return Err(ApiError::new(StatusCode::NOT_FOUND, "UnknownExport", format!("no export named {other}")))
        }
    };
    rendered.map_err(|e| EngineError::from(e).into())
}
