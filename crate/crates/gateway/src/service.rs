//! HTTP service for the coach front end. Dialogs are served one prompt at a
//! time; each session handles one request at a time.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use idcoach_core::board::{AssessmentStatus, Blackboard, Event, ProjectGlobals};
use idcoach_core::engine::{self, Agenda, Choice, Effect, EngineError};
use idcoach_core::idiag::{NodeId, NodeKind, VariableType};
use idcoach_core::ks::{Answer, Answers, DialogStep, KsError};
use idcoach_core::solve::Evaluation;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use crate::portfolio::{PortfolioError, PortfolioStore, PortfolioSummary};
use crate::script::evaluate_if_complete;
use crate::session::{load_session, save_session, SessionError};

struct Pending {
    choice: Choice,
    answers: Answers,
}

struct Session {
    bb: Blackboard,
    pending: Option<Pending>,
    closed: bool,
}

type SessionMap = std::sync::Mutex<HashMap<String, Arc<Mutex<Session>>>>;

/// Shared service state: live sessions plus the data directory holding
/// saved sessions and the portfolio store.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<SessionMap>,
    data_dir: PathBuf,
    portfolio: PortfolioStore,
}

impl AppState {
    /// Open a data directory, reloading every saved session in it.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let data_dir = data_dir.into();
        let dir = data_dir.join("sessions");
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let bb = load_session(&path)?;
                sessions.insert(id, Arc::new(Mutex::new(Session { bb, pending: None, closed: false })));
            }
        }
        Ok(AppState {
            sessions: Arc::new(std::sync::Mutex::new(sessions)),
            portfolio: PortfolioStore::new(data_dir.join("portfolio.jsonl")),
            data_dir,
        })
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.data_dir.join("sessions").join(format!("{id}.json"))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session `{id}`")))
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::NotOnAgenda(_) => "not-on-agenda",
            EngineError::Ks(KsError::Answer(_)) => "invalid-answer",
            EngineError::Ks(_) => "rejected",
            EngineError::Board(_) => "rejected",
            EngineError::Evaluation(_) => "not-evaluable",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

impl From<PortfolioError> for ApiError {
    fn from(e: PortfolioError) -> Self {
        match e {
            PortfolioError::Incomplete => ApiError::new(StatusCode::CONFLICT, "incomplete", e.to_string()),
            PortfolioError::Evaluation(_) => ApiError::new(StatusCode::CONFLICT, "not-evaluable", e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct AgendaView {
    #[serde(flatten)]
    pub agenda: Agenda,
    /// The node the coach would go to directly, if bypass applies.
    pub bypass: Option<NodeId>,
    pub complete: bool,
    pub closed: bool,
}

fn agenda_view(s: &Session) -> AgendaView {
    let agenda = engine::agenda(&s.bb);
    AgendaView { bypass: engine::maybe_bypass(&s.bb, &agenda), complete: engine::is_complete(&s.bb), closed: s.closed, agenda }
}

/// Where a dialog stands after a request.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DialogState {
    Idle,
    Prompt { choice: Choice, prompt: DialogStep, answered: Answers },
    Done { effect: Effect, agenda: AgendaView },
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    #[serde(default)]
    globals: Option<ProjectGlobals>,
}

#[derive(Debug, Serialize)]
struct Created {
    id: String,
    agenda: AgendaView,
}

#[derive(Debug, Deserialize)]
struct ChoiceRequest {
    choice: Choice,
}

#[derive(Debug, Deserialize)]
struct AnswerRequest {
    prompt: String,
    answer: Answer,
}

#[derive(Debug, Deserialize)]
struct StepRequest {
    choice: Choice,
    #[serde(default)]
    answers: Answers,
}

#[derive(Debug, Deserialize)]
struct RecordRequest {
    session: String,
}

#[derive(Debug, Serialize)]
struct NodeView {
    id: NodeId,
    name: String,
    kind: NodeKind,
    vtype: VariableType,
    status: Option<AssessmentStatus>,
    possibilities: Vec<String>,
}

#[derive(Debug, Serialize)]
struct DiagramView {
    nodes: Vec<NodeView>,
    arcs: Vec<(NodeId, NodeId)>,
    focus: Vec<NodeId>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/agenda", get(get_agenda))
        .route("/sessions/{id}/choice", post(post_choice))
        .route("/sessions/{id}/prompt", get(get_prompt))
        .route("/sessions/{id}/answer", post(post_answer))
        .route("/sessions/{id}/cancel", post(cancel))
        .route("/sessions/{id}/step", post(post_step))
        .route("/sessions/{id}/resume", post(resume))
        .route("/sessions/{id}/diagram", get(get_diagram))
        .route("/sessions/{id}/evaluation", get(get_evaluation))
        .route("/sessions/{id}/log", get(get_log))
        .route("/portfolio", get(list_portfolio).post(record_portfolio))
        .with_state(state)
}

async fn create_session(State(st): State<AppState>, body: Option<Json<CreateRequest>>) -> Result<(StatusCode, Json<Created>), ApiError> {
    let globals = body.and_then(|Json(b)| b.globals).unwrap_or_default();
    let bb = Blackboard::new(globals).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-globals", e.to_string()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session { bb, pending: None, closed: false };
    let agenda = agenda_view(&session);
    st.sessions.lock().expect("session map").insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(Created { id, agenda })))
}

async fn list_sessions(State(st): State<AppState>) -> Json<Vec<String>> {
    let mut ids: Vec<String> = st.sessions.lock().expect("session map").keys().cloned().collect();
    ids.sort();
    Json(ids)
}

async fn get_agenda(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<AgendaView> {
    let s = st.session(&id)?;
    let s = s.lock().await;
    Ok(Json(agenda_view(&s)))
}

fn ensure_open(s: &Session) -> Result<(), ApiError> {
    if s.closed {
        return Err(ApiError::new(StatusCode::CONFLICT, "closed", "the consultation has ended; resume it first"));
    }
    Ok(())
}

/// Run a complete step and carry out its save and exit effects.
fn finish(st: &AppState, id: &str, s: &mut Session, choice: Choice, answers: &Answers) -> Result<DialogState, ApiError> {
    s.pending = None;
    let out = engine::step(&mut s.bb, choice, answers)?;
    match out.effect {
        Effect::SaveRequested => save_session(&s.bb, &st.session_path(id))?,
        Effect::Exited => {
            save_session(&s.bb, &st.session_path(id))?;
            s.closed = true;
        }
        _ => {}
    }
    Ok(DialogState::Done { effect: out.effect, agenda: agenda_view(s) })
}

fn advance(st: &AppState, id: &str, s: &mut Session) -> Result<DialogState, ApiError> {
    let Some(p) = &s.pending else { return Ok(DialogState::Idle) };
    let program = engine::program_for(&s.bb, p.choice)?;
    match program.next_prompt(&p.answers) {
        Some(step) => Ok(DialogState::Prompt { choice: p.choice, prompt: step.clone(), answered: p.answers.clone() }),
        None => {
            let Pending { choice, answers } = s.pending.take().expect("pending");
            finish(st, id, s, choice, &answers)
        }
    }
}

async fn post_choice(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Json(req): Json<ChoiceRequest>) -> ApiResult<DialogState> {
    let s = st.session(&id)?;
    let mut s = s.lock().await;
    ensure_open(&s)?;
    if !engine::agenda(&s.bb).offers(req.choice) {
        return Err(EngineError::NotOnAgenda(req.choice).into());
    }
    s.pending = Some(Pending { choice: req.choice, answers: Answers::new() });
    Ok(Json(advance(&st, &id, &mut s)?))
}

async fn get_prompt(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<DialogState> {
    let s = st.session(&id)?;
    let s = s.lock().await;
    let Some(p) = &s.pending else { return Ok(Json(DialogState::Idle)) };
    let program = engine::program_for(&s.bb, p.choice)?;
    let step = program.next_prompt(&p.answers).expect("pending dialogs always have a prompt left");
    Ok(Json(DialogState::Prompt { choice: p.choice, prompt: step.clone(), answered: p.answers.clone() }))
}

async fn post_answer(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Json(req): Json<AnswerRequest>) -> ApiResult<DialogState> {
    let s = st.session(&id)?;
    let mut s = s.lock().await;
    ensure_open(&s)?;
    let Some(p) = &s.pending else {
        return Err(ApiError::new(StatusCode::CONFLICT, "no-dialog", "choose an agenda item first"));
    };
    let program = engine::program_for(&s.bb, p.choice)?;
    let expected = program.next_prompt(&p.answers).map(|step| step.id.clone());
    if expected.as_deref() != Some(req.prompt.as_str()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "wrong-prompt",
            format!("expected an answer to `{}`", expected.unwrap_or_default()),
        ));
    }
    program
        .check_one(&req.prompt, &req.answer, &p.answers)
        .map_err(|e| ApiError::from(EngineError::from(e)))?;
    s.pending.as_mut().expect("pending").answers.insert(req.prompt, req.answer);
    Ok(Json(advance(&st, &id, &mut s)?))
}

async fn cancel(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<DialogState> {
    let s = st.session(&id)?;
    s.lock().await.pending = None;
    Ok(Json(DialogState::Idle))
}

async fn post_step(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Json(req): Json<StepRequest>) -> ApiResult<DialogState> {
    let s = st.session(&id)?;
    let mut s = s.lock().await;
    ensure_open(&s)?;
    Ok(Json(finish(&st, &id, &mut s, req.choice, &req.answers)?))
}

async fn resume(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<AgendaView> {
    let s = st.session(&id)?;
    let mut s = s.lock().await;
    s.closed = false;
    Ok(Json(agenda_view(&s)))
}

async fn get_diagram(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<DiagramView> {
    let s = st.session(&id)?;
    let s = s.lock().await;
    let d = s.bb.diagram();
    let nodes = d
        .nodes()
        .map(|n| NodeView {
            id: n.id,
            name: n.name.clone(),
            kind: n.kind,
            vtype: n.vtype,
            status: s.bb.status(n.id),
            possibilities: n.possibilities.iter().map(|p| p.label.clone()).collect(),
        })
        .collect();
    Ok(Json(DiagramView { nodes, arcs: d.arcs().collect(), focus: s.bb.focus().as_slice().to_vec() }))
}

async fn get_evaluation(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Evaluation> {
    let s = st.session(&id)?;
    let s = s.lock().await;
    match evaluate_if_complete(&s.bb) {
        Ok(Some(ev)) => Ok(Json(ev)),
        Ok(None) => Err(ApiError::new(StatusCode::CONFLICT, "incomplete", "the model is not complete yet")),
        Err(e) => Err(ApiError::new(StatusCode::CONFLICT, "not-evaluable", e.to_string())),
    }
}

async fn get_log(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Vec<Event>> {
    let s = st.session(&id)?;
    let s = s.lock().await;
    Ok(Json(s.bb.log().to_vec()))
}

async fn list_portfolio(State(st): State<AppState>) -> ApiResult<Vec<PortfolioSummary>> {
    Ok(Json(st.portfolio.list()?))
}

async fn record_portfolio(State(st): State<AppState>, Json(req): Json<RecordRequest>) -> Result<(StatusCode, Json<PortfolioSummary>), ApiError> {
    let s = st.session(&req.session)?;
    let s = s.lock().await;
    Ok((StatusCode::CREATED, Json(st.portfolio.record(&s.bb)?)))
}

/// Serve until interrupted.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
