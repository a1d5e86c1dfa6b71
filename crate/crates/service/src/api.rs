//! HTTP API and the resumable event stream.
//!
//! Every mutation of a session runs on a blocking thread while holding that
//! session's lock, first against a scratch copy. New events are written to
//! the log before the copy replaces the live session and before they are
//! broadcast, so subscribers never see an event that is not on disk.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, Mutex};
use tokio_stream::wrappers::BroadcastStream;

use colleagues::analytics::{interaction_metrics, transcript_duration_minutes};
use colleagues::error::{EngineError, GatewayError, LogError};
use colleagues::store::{event_line, valid_session_id};
use colleagues::{Action, ActionOutcome, Engine, EventStore, Session, SessionEvent, SessionState};

/// How many recent action ids each session remembers for deduplication.
const DEDUP_WINDOW: usize = 256;
const STREAM_CAPACITY: usize = 1024;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn no_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NoSuchSession", format!("no session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        use EngineError::*;
        let (status, code) = match &e {
            EmptyProblem => (StatusCode::BAD_REQUEST, "EmptyProblem"),
            RosterOutOfBounds { .. } => (StatusCode::BAD_REQUEST, "RosterOutOfBounds"),
            UnknownPersona(_) => (StatusCode::BAD_REQUEST, "UnknownPersona"),
            DuplicatePersona(_) => (StatusCode::BAD_REQUEST, "DuplicatePersona"),
            FacilitatorInRoster => (StatusCode::BAD_REQUEST, "FacilitatorInRoster"),
            EmptyMessage => (StatusCode::BAD_REQUEST, "EmptyMessage"),
            UnknownMessage(_) => (StatusCode::NOT_FOUND, "UnknownMessage"),
            InvalidPhase { .. } => (StatusCode::CONFLICT, "InvalidPhase"),
            Gateway(g) => (StatusCode::BAD_GATEWAY, gateway_code(g)),
            Prompt(_) => (StatusCode::INTERNAL_SERVER_ERROR, "PromptError"),
        };
        Self::new(status, code, e.to_string())
    }
}

fn gateway_code(e: &GatewayError) -> &'static str {
    match e {
        GatewayError::Transport(_) => "ProviderTransport",
        GatewayError::Timeout => "ProviderTimeout",
        GatewayError::RateLimited => "ProviderRateLimited",
        GatewayError::ParseFailure { .. } => "ProviderParseFailure",
        GatewayError::ScriptExhausted(_) | GatewayError::ScriptMismatch { .. } => "ProviderScript",
        GatewayError::Config(_) => "ProviderConfig",
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "LogWrite", e.to_string())
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidBody", e.body_text()))
}

struct Live {
    session: Session,
    /// Events already on disk.
    persisted: usize,
    done: HashMap<String, Value>,
    done_order: VecDeque<String>,
}

impl Live {
    fn remember(&mut self, action_id: String, response: Value) {
        if self.done_order.len() == DEDUP_WINDOW {
            if let Some(old) = self.done_order.pop_front() {
                self.done.remove(&old);
            }
        }
        self.done_order.push_back(action_id.clone());
        self.done.insert(action_id, response);
    }
}

struct Slot {
    live: Arc<Mutex<Live>>,
    tx: broadcast::Sender<SessionEvent>,
}

impl Slot {
    fn new(session: Session) -> Arc<Self> {
        let persisted = session.events.len();
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        Arc::new(Self {
            live: Arc::new(Mutex::new(Live { session, persisted, done: HashMap::new(), done_order: VecDeque::new() })),
            tx,
        })
    }
}

pub struct AppState {
    engine: Arc<Engine>,
    store: EventStore,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    /// Loads every session found in the store. Logs with a torn final line
    /// are repaired; otherwise damaged logs are skipped with a warning.
    pub fn open(engine: Arc<Engine>, store: EventStore) -> Result<Arc<Self>, LogError> {
        let mut sessions = HashMap::new();
        for id in store.list()? {
            match store.recover(&id) {
                Ok(s) => {
                    sessions.insert(id, Slot::new(s));
                }
                Err(e) => log::warn!("skipping session {id}: {e}"),
            }
        }
        log::info!("loaded {} sessions from {}", sessions.len(), store.dir().display());
        Ok(Arc::new(Self { engine, store, sessions: RwLock::new(sessions) }))
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::no_session(id))
    }

    /// A copy of the live session.
    pub async fn snapshot(&self, id: &str) -> Option<Session> {
        let slot = self.slot(id).ok()?;
        let live = slot.live.lock().await;
        Some(live.session.clone())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/personas", get(personas))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(act))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/metrics", get(metrics))
        .with_state(state)
}

#[derive(Serialize)]
struct PersonaView<'a> {
    id: &'a str,
    display_name: &'a str,
    talkativeness: colleagues::Talkativeness,
    avatar_key: &'a str,
}

async fn personas(State(st): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<PersonaView> = st
        .engine
        .catalog()
        .colleagues()
        .map(|p| PersonaView {
            id: &p.id,
            display_name: &p.display_name,
            talkativeness: p.talkativeness,
            avatar_key: &p.avatar_key,
        })
        .collect();
    let settings = st.engine.settings();
    Json(json!({ "personas": list, "roster_min": settings.roster_min, "roster_max": settings.roster_max }))
}

#[derive(Deserialize)]
pub struct CreateBody {
    pub problem: String,
    pub roster: Vec<String>,
    pub seed: Option<u64>,
    pub session_id: Option<String>,
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    payload: Result<Json<CreateBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req = body(payload)?;
    let id = match req.session_id {
        Some(id) if !valid_session_id(&id) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidSessionId", "use letters, digits, - and _"))
        }
        Some(id) => id,
        None => uuid::Uuid::new_v4().simple().to_string(),
    };
    let seed = req.seed.unwrap_or_else(rand::random);
    let (session, welcome) = st.engine.create_session(&id, &req.problem, &req.roster, seed)?;
    // reserve the id before touching the disk; the slot is locked until
    // the session is in place
    let slot = Slot::new(Session::default());
    let mut live = slot.live.clone().try_lock_owned().expect("fresh slot is unlocked");
    {
        let mut map = st.sessions.write().unwrap();
        if map.contains_key(&id) || st.store.path(&id).exists() {
            return Err(ApiError::new(StatusCode::CONFLICT, "SessionExists", format!("session `{id}` exists")));
        }
        map.insert(id.clone(), slot.clone());
    }
    if let Err(e) = st.store.sync(&session, 0) {
        st.sessions.write().unwrap().remove(&id);
        return Err(e.into());
    }
    live.persisted = session.events.len();
    for ev in &session.events {
        let _ = slot.tx.send(ev.clone());
    }
    live.session = session;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id, "seed": seed, "welcome": welcome }))))
}

async fn list_sessions(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "sessions": st.session_ids() }))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = st.slot(&id)?;
    let live = slot.live.lock().await;
    Ok(Json(json!({
        "session_id": id,
        "last_seq": live.session.events.len(),
        "state": live.session.state,
    })))
}

#[derive(Deserialize)]
pub struct ActBody {
    /// Client-chosen id; a repeat of a successful action returns the
    /// stored response instead of acting again.
    pub action_id: Option<String>,
    #[serde(flatten)]
    pub action: Action,
}

async fn act(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<ActBody>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let slot = st.slot(&id)?;
    let req = body(payload)?;
    let mut live = slot.live.clone().lock_owned().await;
    if let Some(prev) = req.action_id.as_ref().and_then(|a| live.done.get(a)) {
        return Ok(Json(prev.clone()));
    }
    let st2 = st.clone();
    let slot2 = slot.clone();
    tokio::task::spawn_blocking(move || {
        let mut scratch = live.session.clone();
        let outcome: ActionOutcome = st2.engine.apply_action(&mut scratch, &req.action)?;
        let persisted = st2.store.sync(&scratch, live.persisted)?;
        let fresh = scratch.events[live.persisted..].to_vec();
        live.persisted = persisted;
        live.session = scratch;
        for ev in fresh {
            let _ = slot2.tx.send(ev);
        }
        let response = serde_json::to_value(&outcome).expect("outcomes serialize");
        if let Some(action_id) = req.action_id {
            live.remember(action_id, response.clone());
        }
        Ok(Json(response))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
}

#[derive(Deserialize)]
pub struct EventsQuery {
    /// Last seq the client has seen; delivery starts after it.
    pub from: Option<u64>,
}

/// Resumable stream of log events. Each SSE frame carries the event seq
/// as its id, the kind as its event name and the JSONL line as data.
async fn events(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = st.slot(&id)?;
    let header_from = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let from = q.from.or(header_from).unwrap_or(0);
    // subscribe under the lock so nothing falls between backlog and live
    let (backlog, rx) = {
        let live = slot.live.lock().await;
        (live.session.events_after(from).to_vec(), slot.tx.subscribe())
    };
    let mut last = backlog.last().map_or(from, |e| e.seq);
    let live = BroadcastStream::new(rx)
        // a lagging subscriber is cut off and resumes with `from`
        .take_while(|r| futures::future::ready(r.is_ok()))
        .filter_map(move |r| {
            let ev = r.ok().filter(|ev| ev.seq > last);
            if let Some(ev) = &ev {
                last = ev.seq;
            }
            futures::future::ready(ev)
        });
    let stream = stream::iter(backlog).chain(live).map(|ev| Ok(sse_event(&ev)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn sse_event(ev: &SessionEvent) -> Event {
    Event::default().id(ev.seq.to_string()).event(ev.body.kind()).data(event_line(ev))
}

async fn summary(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = st.snapshot(&id).await.ok_or_else(|| ApiError::no_session(&id))?;
    let st2 = st.clone();
    let text = tokio::task::spawn_blocking(move || st2.engine.summarize(&session))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(json!({ "session_id": id, "summary": text })))
}

async fn metrics(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = st.snapshot(&id).await.ok_or_else(|| ApiError::no_session(&id))?;
    Ok(Json(session_metrics(&id, &session.state)?))
}

/// Interaction metrics over the transcript's own time span.
pub fn session_metrics(id: &str, state: &SessionState) -> Result<Value, ApiError> {
    let minutes: f64 = transcript_duration_minutes(&state.transcript).unwrap_or(0.0);
    let m = interaction_metrics(&state.transcript, minutes)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ZeroDuration", e.to_string()))?;
    Ok(json!({ "session_id": id, "duration_minutes": minutes, "metrics": m }))
}
