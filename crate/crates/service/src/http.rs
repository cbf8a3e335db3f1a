//! HTTP API.
//!
//! Mutations on one board are serialized by a per-board lock and checked
//! against the client's expected revision. Each accepted command is
//! persisted before it is acknowledged and then fanned out to event-stream
//! subscribers.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use riskboard_core::board::{BoardDefinition, Event};
use riskboard_core::knowledge::CatalogEntry;
use riskboard_core::{
    apply_command, ArchitectureModel, Board, CommandError, CriLevel, KnowledgeBase,
    MutationCommand, ReportFormat, Rule,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;

use crate::store::{FileStore, StoreError};

pub const ACTOR_HEADER: &str = "x-actor";
pub const REVISION_HEADER: &str = "x-board-revision";
const STREAM_CAPACITY: usize = 1024;

struct BoardHandle {
    board: tokio::sync::Mutex<Board>,
    events: broadcast::Sender<Event>,
}

pub struct AppState {
    store: FileStore,
    kb: RwLock<Arc<KnowledgeBase>>,
    kb_writes: tokio::sync::Mutex<()>,
    boards: Mutex<HashMap<String, Arc<BoardHandle>>>,
}

impl AppState {
    pub fn new(store: FileStore, kb_base: Option<PathBuf>) -> Result<Arc<Self>, StoreError> {
        let kb = store.knowledge_base(kb_base.as_deref())?;
        Ok(Arc::new(Self {
            store,
            kb: RwLock::new(Arc::new(kb)),
            kb_writes: tokio::sync::Mutex::new(()),
            boards: Mutex::new(HashMap::new()),
        }))
    }

    pub fn knowledge(&self) -> Arc<KnowledgeBase> {
        self.kb.read().expect("kb lock").clone()
    }

    fn handle(&self, id: &str) -> Result<Arc<BoardHandle>, ApiError> {
        let mut boards = self.boards.lock().expect("board map lock");
        if let Some(handle) = boards.get(id) {
            return Ok(handle.clone());
        }
        let board = self.store.load(id)?;
        let handle = Arc::new(BoardHandle {
            board: tokio::sync::Mutex::new(board),
            events: broadcast::channel(STREAM_CAPACITY).0,
        });
        boards.insert(id.to_string(), handle.clone());
        Ok(handle)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/boards", post(create_board).get(list_boards))
        .route("/v1/boards/{id}", get(get_board))
        .route("/v1/boards/{id}/commands", post(post_command))
        .route("/v1/boards/{id}/report", get(get_report))
        .route("/v1/boards/{id}/events", get(stream_events))
        .route("/v1/knowledge/threats", get(list_threats))
        .route("/v1/knowledge/controls", get(list_controls))
        .route("/v1/knowledge/extensions", post(extend_knowledge))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let status = match &err {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::AlreadyExists(_) => StatusCode::CONFLICT,
            StoreError::InvalidId(_) => StatusCode::BAD_REQUEST,
            StoreError::Knowledge(_) | StoreError::Board(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Corrupt { .. } | StoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, err)
    }
}

impl From<CommandError> for ApiError {
    fn from(err: CommandError) -> Self {
        match err {
            CommandError::Conflict { expected, current } => Self {
                status: StatusCode::CONFLICT,
                body: json!({
                    "error": err.to_string(),
                    "expected": expected,
                    "current": current,
                }),
            },
            CommandError::MissingRevision | CommandError::Invalid(_) => Self::bad_request(err),
            CommandError::Board(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, err),
        }
    }
}

fn actor(headers: &HeaderMap) -> Option<String> {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
}

fn with_revision(mut response: Response, revision: u64) -> Response {
    let headers = response.headers_mut();
    headers.insert(REVISION_HEADER, HeaderValue::from(revision));
    if let Ok(etag) = HeaderValue::from_str(&format!("\"{revision}\"")) {
        headers.insert(header::ETAG, etag);
    }
    response
}

/// Revision from `If-Match`, accepting `3`, `"3"` and `W/"3"`.
fn if_match(headers: &HeaderMap) -> Result<Option<u64>, ApiError> {
    let Some(raw) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let text = raw.to_str().map_err(ApiError::bad_request)?.trim();
    let text = text.strip_prefix("W/").unwrap_or(text).trim_matches('"');
    text.parse().map(Some).map_err(|_| {
        ApiError::bad_request(format!("If-Match must be a revision number, got `{text}`"))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBoard {
    /// A model document: JSON object, or JSON/YAML text.
    model: Value,
    #[serde(default)]
    rules: Option<Vec<Rule>>,
    #[serde(default)]
    board_id: Option<String>,
    #[serde(default)]
    name: Option<String>,
}

pub fn parse_model_value(value: Value) -> Result<ArchitectureModel, String> {
    let model = match value {
        Value::String(text) => ArchitectureModel::parse(&text).map_err(|e| e.to_string())?,
        other => {
            let model: ArchitectureModel =
                serde_json::from_value(other).map_err(|e| e.to_string())?;
            model.validate().map_err(|e| e.to_string())?;
            model
        }
    };
    Ok(model)
}

async fn create_board(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: CreateBoard = serde_json::from_slice(&body).map_err(ApiError::bad_request)?;
    let model = parse_model_value(req.model).map_err(ApiError::bad_request)?;
    let actor = actor(&headers).unwrap_or_else(|| "anonymous".into());
    let name = req.name.unwrap_or_else(|| model.name.clone());
    let rules = req
        .rules
        .unwrap_or_else(riskboard_core::rules::default_ruleset);
    let mut board = Board::new(&name, BoardDefinition::default_four_column(), rules, &actor)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    board
        .import_assets(&model, &actor)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let revision = board.revision();
    let id = {
        let mut boards = app.boards.lock().expect("board map lock");
        let id = app.store.create(req.board_id.as_deref(), &board)?;
        boards.insert(
            id.clone(),
            Arc::new(BoardHandle {
                board: tokio::sync::Mutex::new(board),
                events: broadcast::channel(STREAM_CAPACITY).0,
            }),
        );
        id
    };
    let body = Json(json!({ "board_id": id, "revision": revision }));
    Ok(with_revision(
        (StatusCode::CREATED, body).into_response(),
        revision,
    ))
}

async fn list_boards(State(app): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let mut boards = Vec::new();
    for id in app.store.list()? {
        let handle = app.handle(&id)?;
        let board = handle.board.lock().await;
        boards.push(json!({
            "board_id": id,
            "name": board.name(),
            "revision": board.revision(),
            "cards": board.cards().len(),
        }));
    }
    Ok(Json(json!({ "boards": boards })))
}

async fn get_board(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let handle = app.handle(&id)?;
    let board = handle.board.lock().await;
    let response = (
        [(header::CONTENT_TYPE, "application/json")],
        board.to_document_json(),
    )
        .into_response();
    Ok(with_revision(response, board.revision()))
}

async fn post_command(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let mut cmd: MutationCommand = serde_json::from_slice(&body).map_err(ApiError::bad_request)?;
    if let Some(rev) = if_match(&headers)? {
        if cmd
            .expected_revision
            .is_some_and(|body_rev| body_rev != rev)
        {
            return Err(ApiError::bad_request(
                "If-Match and expected_revision disagree",
            ));
        }
        cmd.expected_revision = Some(rev);
    }
    if cmd.actor.is_none() {
        cmd.actor = actor(&headers);
    }
    let handle = app.handle(&id)?;
    let kb = app.knowledge();

    let mut board = handle.board.lock().await;
    let mut next = board.clone();
    let outcome = apply_command(&mut next, &kb, &cmd)?;
    app.store.append(&id, &next, &outcome.events)?;
    *board = next;
    for event in &outcome.events {
        // no subscribers is fine
        let _ = handle.events.send(event.clone());
    }
    drop(board);

    let revision = outcome.revision;
    Ok(with_revision(Json(outcome).into_response(), revision))
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let format: ReportFormat = q
        .format
        .as_deref()
        .unwrap_or("json")
        .parse()
        .map_err(ApiError::bad_request)?;
    let handle = app.handle(&id)?;
    let kb = app.knowledge();
    let board = handle.board.lock().await;
    let report = riskboard_core::report::board_report(&board, &kb);
    let revision = board.revision();
    drop(board);
    let content_type = match format {
        ReportFormat::Json => "application/json",
        ReportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    let response = (
        [(header::CONTENT_TYPE, content_type)],
        report.render(format),
    )
        .into_response();
    Ok(with_revision(response, revision))
}

#[derive(Deserialize)]
struct EventsQuery {
    since: Option<u64>,
}

fn to_sse(event: Event) -> Result<SseEvent, Infallible> {
    let data = serde_json::to_string(&event).expect("events serialize");
    Ok(SseEvent::default()
        .id(event.sequence.to_string())
        .event(format!("{:?}", event.kind()))
        .data(data))
}

/// Replays events after `since` (or the `Last-Event-ID` header) and then
/// follows live events. A subscriber that falls too far behind is
/// disconnected and can resume from its last id.
async fn stream_events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let since = q.since.or(resume).unwrap_or(0);
    let handle = app.handle(&id)?;

    let board = handle.board.lock().await;
    let backlog = board.events_since(since).to_vec();
    let rx = handle.events.subscribe();
    drop(board);

    let last = backlog.last().map_or(since, |e| e.sequence);
    let live = stream::unfold((rx, last), |(mut rx, last)| async move {
        loop {
            match rx.recv().await {
                Ok(event) if event.sequence <= last => continue,
                Ok(event) => {
                    let seq = event.sequence;
                    return Some((event, (rx, seq)));
                }
                Err(_) => return None,
            }
        }
    });
    let events = stream::iter(backlog).chain(live).map(to_sse);
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
struct ThreatQuery {
    asset_type: Option<String>,
}

async fn list_threats(
    State(app): State<Arc<AppState>>,
    Query(q): Query<ThreatQuery>,
) -> Json<Value> {
    let kb = app.knowledge();
    let threats: Vec<_> = match &q.asset_type {
        Some(t) => kb.recommend_threats(t),
        None => kb.threats().collect(),
    };
    Json(json!(threats))
}

#[derive(Deserialize)]
struct ControlQuery {
    threat: Option<String>,
    level: Option<String>,
}

async fn list_controls(
    State(app): State<Arc<AppState>>,
    Query(q): Query<ControlQuery>,
) -> Result<Json<Value>, ApiError> {
    let kb = app.knowledge();
    match (&q.threat, &q.level) {
        (None, None) => Ok(Json(json!(kb.controls().collect::<Vec<_>>()))),
        (Some(threat), Some(level)) => {
            let level: CriLevel = level.parse().map_err(ApiError::bad_request)?;
            let rec = kb
                .recommend_controls(threat, level)
                .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e))?;
            Ok(Json(json!(rec)))
        }
        _ => Err(ApiError::bad_request(
            "threat and level must be given together",
        )),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExtensionBody {
    Entries { entries: Vec<CatalogEntry> },
    List(Vec<CatalogEntry>),
    Single(CatalogEntry),
}

async fn extend_knowledge(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let body: ExtensionBody = serde_json::from_slice(&body).map_err(ApiError::bad_request)?;
    let entries = match body {
        ExtensionBody::Entries { entries } | ExtensionBody::List(entries) => entries,
        ExtensionBody::Single(entry) => vec![entry],
    };
    if entries.is_empty() {
        return Err(ApiError::bad_request("no catalog entries given"));
    }
    let added = entries.len();
    let _guard = app.kb_writes.lock().await;
    let extended = app.store.extend_knowledge(&app.knowledge(), entries)?;
    let summary = json!({
        "added": added,
        "threats": extended.threats().count(),
        "controls": extended.controls().count(),
        "mappings": extended.mappings().len(),
    });
    *app.kb.write().expect("kb lock") = Arc::new(extended);
    Ok(Json(summary))
}
