//! HTTP API over a set of independent sessions.
//!
//! Each session sits behind its own lock and is mutated only on the blocking
//! pool, so a long run never stalls the async workers. Reads are served from
//! a snapshot refreshed after every mutation, and the event stream follows
//! the session's event log by cursor.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use hopes_core::gateway::GatewayError;
use hopes_core::protocol::{NextStep, ProtocolError};
use hopes_core::session::{
    EventBody, EventLog, RunStatus, Session, SessionConfig, SessionError, SessionSnapshot,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::watch;

/// Server-wide settings applied to every new session.
#[derive(Debug, Clone, Default)]
pub struct ServerSettings {
    /// Base config; request bodies override it field by field.
    pub base: SessionConfig,
    /// Sessions write their runs to `<out_root>/<id>`; nothing is written when absent.
    pub out_root: Option<PathBuf>,
}

struct Entry {
    session: Mutex<Session>,
    snapshot: RwLock<SessionSnapshot>,
    events: EventLog,
    /// Number of events in the log; bumped by a log hook.
    pushed: watch::Receiver<u64>,
    export: Mutex<Option<String>>,
}

impl Entry {
    fn session(&self) -> MutexGuard<'_, Session> {
        self.session
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn refresh(&self, session: &Session) {
        *self
            .snapshot
            .write()
            .unwrap_or_else(|poisoned| poisoned.into_inner()) = session.snapshot();
    }

    fn snapshot(&self) -> SessionSnapshot {
        self.snapshot
            .read()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
            .clone()
    }
}

#[derive(Clone)]
pub struct AppState {
    settings: Arc<ServerSettings>,
    sessions: Arc<RwLock<BTreeMap<String, Arc<Entry>>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(settings: ServerSettings) -> Self {
        Self {
            settings: Arc::new(settings),
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    fn get(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        let sessions = self
            .sessions
            .read()
            .unwrap_or_else(|poisoned| poisoned.into_inner());
        sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Session(SessionError),
    Internal(String),
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Session(e)
    }
}

fn session_status(e: &SessionError) -> StatusCode {
    match e {
        SessionError::NotBegun | SessionError::WrongStatus { .. } => StatusCode::CONFLICT,
        SessionError::Protocol(ProtocolError::Empty(_)) => StatusCode::UNPROCESSABLE_ENTITY,
        SessionError::Protocol(ProtocolError::Gateway(g)) => gateway_status(g),
        SessionError::Protocol(_) => StatusCode::CONFLICT,
        SessionError::Gateway(g) => gateway_status(g),
        SessionError::Assistant(hopes_core::assistants::AssistantError::Gateway(g)) => {
            gateway_status(g)
        }
        SessionError::Config(_)
        | SessionError::Scenario(_)
        | SessionError::UnknownRole(_)
        | SessionError::EmptyText
        | SessionError::Assistant(_) => StatusCode::UNPROCESSABLE_ENTITY,
        SessionError::Io(_)
        | SessionError::Land(_)
        | SessionError::Network(_)
        | SessionError::Replay(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn gateway_status(e: &GatewayError) -> StatusCode {
    match e {
        GatewayError::Config(_) | GatewayError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_GATEWAY,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::NotFound(id) => (StatusCode::NOT_FOUND, format!("no session {id}")),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Session(e) => (session_status(&e), e.to_string()),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_snapshot))
        .route("/sessions/{id}/events/begin", post(begin))
        .route(
            "/sessions/{id}/events/complete-reflection",
            post(complete_reflection),
        )
        .route(
            "/sessions/{id}/events/complete-integration",
            post(complete_integration),
        )
        .route("/sessions/{id}/run", post(run))
        .route("/sessions/{id}/decision", post(decision))
        .route("/sessions/{id}/decision/expire", post(expire))
        .route("/sessions/{id}/reflection/open", post(reflection_open))
        .route(
            "/sessions/{id}/reflection/message",
            post(reflection_message),
        )
        .route("/sessions/{id}/assistant/focus", post(focus))
        .route("/sessions/{id}/assistant/message", post(assistant_message))
        .route("/sessions/{id}/assistant/report", post(report))
        .route("/sessions/{id}/draft", put(edit_draft))
        .route("/sessions/{id}/stream", get(stream_events))
        .route("/sessions/{id}/series.csv", get(series_csv))
        .route("/sessions/{id}/transcript.jsonl", get(transcript_jsonl))
        .route("/sessions/{id}/export.md", get(export_md))
        .with_state(state)
}

/// Overlays `patch` on `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base), Value::Object(patch)) => {
            for (key, value) in patch {
                merge(base.entry(key).or_insert(Value::Null), value);
            }
        }
        (base, patch) => *base = patch,
    }
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn create_session(
    State(state): State<AppState>,
    body: axum::body::Bytes,
) -> ApiResult<impl IntoResponse> {
    let patch: Value = parse_body(&body)?;
    if !(patch.is_object() || patch.is_null()) {
        return Err(ApiError::BadRequest("config must be a JSON object".into()));
    }
    let mut config = serde_json::to_value(&state.settings.base)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    if !patch.is_null() {
        merge(&mut config, patch);
    }
    let mut config: SessionConfig =
        serde_json::from_value(config).map_err(|e| ApiError::BadRequest(format!("config: {e}")))?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    config.out_dir = state.settings.out_root.as_ref().map(|root| root.join(&id));

    let session_id = id.clone();
    let session = tokio::task::spawn_blocking(move || {
        if let Some(dir) = &config.out_dir {
            std::fs::create_dir_all(dir)?;
        }
        Session::create(session_id, config)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;

    let events = session.events();
    let (tx, rx) = watch::channel(events.len() as u64);
    events.subscribe(move |e| {
        tx.send_replace(e.seq + 1);
    });
    let snapshot = session.snapshot();
    let entry = Entry {
        session: Mutex::new(session),
        snapshot: RwLock::new(snapshot.clone()),
        events,
        pushed: rx,
        export: Mutex::new(None),
    };
    state
        .sessions
        .write()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
        .insert(id.clone(), Arc::new(entry));
    tracing::info!(session = %id, "created");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "snapshot": snapshot })),
    ))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    let sessions = state
        .sessions
        .read()
        .unwrap_or_else(|poisoned| poisoned.into_inner());
    Json(sessions.keys().cloned().collect())
}

async fn get_snapshot(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSnapshot>> {
    Ok(Json(state.get(&id)?.snapshot()))
}

/// Runs `f` on the session on the blocking pool, then refreshes the snapshot.
async fn mutate<T, F>(state: &AppState, id: &str, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
{
    let entry = state.get(id)?;
    tokio::task::spawn_blocking(move || {
        let mut session = entry.session();
        let result = f(&mut session);
        entry.refresh(&session);
        result
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(ApiError::from)
}

fn status_body(status: RunStatus) -> Json<Value> {
    Json(json!({ "status": status }))
}

#[derive(Debug, Default, Deserialize)]
struct BeginBody {
    role: Option<String>,
}

async fn begin(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Json<Value>> {
    let BeginBody { role } = parse_body(&body)?;
    let status = mutate(&state, &id, move |s| {
        s.begin(role.as_deref())?;
        Ok(s.status().clone())
    })
    .await?;
    Ok(status_body(status))
}

async fn complete_reflection(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(next): Json<NextStep>,
) -> ApiResult<Json<Value>> {
    let protocol = mutate(&state, &id, move |s| {
        s.complete_reflection(next)?;
        Ok(s.protocol().clone())
    })
    .await?;
    Ok(Json(json!({ "protocol": protocol })))
}

async fn complete_integration(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let protocol = mutate(&state, &id, |s| {
        s.complete_integration()?;
        Ok(s.protocol().clone())
    })
    .await?;
    Ok(Json(json!({ "protocol": protocol })))
}

async fn run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(status_body(
        mutate(&state, &id, Session::run_until_pause).await?,
    ))
}

#[derive(Debug, Deserialize)]
struct TextBody {
    text: String,
}

async fn decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<Json<Value>> {
    Ok(status_body(
        mutate(&state, &id, move |s| s.submit_human_decision(&body.text)).await?,
    ))
}

async fn expire(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(status_body(
        mutate(&state, &id, Session::expire_human).await?,
    ))
}

async fn reflection_open(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let reply = mutate(&state, &id, Session::reflection_open).await?;
    Ok(Json(json!({ "reply": reply })))
}

async fn reflection_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<Json<Value>> {
    let reply = mutate(&state, &id, move |s| s.reflection_message(&body.text)).await?;
    Ok(Json(json!({ "reply": reply })))
}

#[derive(Debug, Deserialize)]
struct FocusBody {
    columns: Vec<String>,
}

async fn focus(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<FocusBody>,
) -> ApiResult<Json<Value>> {
    let analysis = mutate(&state, &id, move |s| s.focus(&body.columns)).await?;
    Ok(Json(json!({ "analysis": analysis })))
}

async fn assistant_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<Json<Value>> {
    let reply = mutate(&state, &id, move |s| s.assistant_message(&body.text)).await?;
    Ok(Json(json!(reply)))
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let report = mutate(&state, &id, Session::generate_report).await?;
    Ok(Json(json!({ "report": report })))
}

async fn edit_draft(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<TextBody>,
) -> ApiResult<Json<Value>> {
    let draft = mutate(&state, &id, move |s| s.edit_draft(&body.text)).await?;
    Ok(Json(json!(draft)))
}

fn text_response(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

async fn series_csv(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let body = mutate(&state, &id, |s| Ok(s.series_csv())).await?;
    Ok(text_response("text/csv; charset=utf-8", body))
}

async fn transcript_jsonl(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let body = mutate(&state, &id, |s| Ok(s.transcript_jsonl())).await?;
    Ok(text_response("application/x-ndjson", body))
}

async fn export_md(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = state.get(&id)?;
    let markdown = tokio::task::spawn_blocking(move || {
        let mut cached = entry
            .export
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner());
        if let Some(markdown) = cached.as_ref() {
            return Ok(markdown.clone());
        }
        let mut session = entry.session();
        let export = session.export();
        entry.refresh(&session);
        let markdown = export?.markdown;
        *cached = Some(markdown.clone());
        Ok(markdown)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(ApiError::Session)?;
    Ok(text_response("text/markdown; charset=utf-8", markdown))
}

#[derive(Debug, Default, Deserialize)]
struct StreamQuery {
    cursor: Option<u64>,
}

struct Follow {
    entry: Arc<Entry>,
    pushed: watch::Receiver<u64>,
    cursor: u64,
    done: bool,
}

/// Events from `cursor` on, then live ones. Closes after a terminal status
/// event that is the newest in the log.
fn follow(entry: Arc<Entry>, cursor: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let pushed = entry.pushed.clone();
    let start = Follow {
        entry,
        pushed,
        cursor,
        done: false,
    };
    stream::unfold(start, |mut f| async move {
        if f.done {
            return None;
        }
        loop {
            f.pushed.borrow_and_update();
            let batch = f.entry.events.since(f.cursor);
            if batch.is_empty() {
                if f.pushed.changed().await.is_err() {
                    return None;
                }
                continue;
            }
            f.cursor = batch.last().map_or(f.cursor, |e| e.seq + 1);
            let newest = f.entry.events.len() as u64 == f.cursor;
            f.done = newest
                && matches!(batch.last().map(|e| &e.body), Some(EventBody::StatusChanged { status }) if status.is_terminal());
            let events: Vec<Result<Event, Infallible>> = batch
                .iter()
                .map(|e| {
                    let kind = match &e.body {
                        EventBody::TickAdvanced { .. } => "tick_advanced",
                        EventBody::MessageEmitted { .. } => "message_emitted",
                        EventBody::DecisionApplied { .. } => "decision_applied",
                        EventBody::StatusChanged { .. } => "status_changed",
                    };
                    let data = serde_json::to_string(e).expect("events serialize");
                    Ok(Event::default().id(e.seq.to_string()).event(kind).data(data))
                })
                .collect();
            return Some((stream::iter(events), f));
        }
    })
    .flatten()
}

async fn stream_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<StreamQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let entry = state.get(&id)?;
    let last_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|seq| seq + 1);
    let cursor = query.cursor.or(last_id).unwrap_or(0);
    Ok(Sse::new(follow(entry, cursor)).keep_alive(KeepAlive::default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_overlays_nested_fields() {
        let mut base =
            json!({"seed": 1, "round": {"decision_reprompts": 2, "temperature": 0.7}, "phases": 5});
        merge(
            &mut base,
            json!({"seed": 9, "round": {"decision_reprompts": 0}}),
        );
        assert_eq!(
            base,
            json!({"seed": 9, "round": {"decision_reprompts": 0, "temperature": 0.7}, "phases": 5})
        );
    }

    #[test]
    fn blank_body_is_default() {
        let b: BeginBody = parse_body(b"  \n").unwrap();
        assert!(b.role.is_none());
        assert!(matches!(
            parse_body::<BeginBody>(b"{"),
            Err(ApiError::BadRequest(_))
        ));
    }

    #[test]
    fn conflicts_map_to_409() {
        assert_eq!(
            session_status(&SessionError::NotBegun),
            StatusCode::CONFLICT
        );
        assert_eq!(
            session_status(&SessionError::EmptyText),
            StatusCode::UNPROCESSABLE_ENTITY
        );
        assert_eq!(
            session_status(&SessionError::Gateway(GatewayError::EmptyRequest)),
            StatusCode::BAD_GATEWAY
        );
    }
}
