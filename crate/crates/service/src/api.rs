//! HTTP API under `/api/v1` and the server-sent event stream of evaluation ticks.
//!
//! Errors are JSON bodies `{"error": "<Code>", "detail": "<message>"}` with status 400 for bad
//! input, 404 for unknown paths, orders or missing data, 409 for duplicate orders and illegal
//! lifecycle transitions.

use std::convert::Infallible;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;
use twin_core::asset::AssetPath;
use twin_core::eventlog::LogEvent;
use twin_core::forecast::ForecastHorizon;
use twin_core::telemetry::HistoryWindow;
use twin_core::workorder::{Slot, WorkOrderStatus};

use crate::clock::Clock;
use crate::engine::{EngineError, EvaluationTick, TwinState};

#[derive(Clone)]
pub struct AppState {
    pub twin: Arc<RwLock<TwinState>>,
    pub ticks: broadcast::Sender<EvaluationTick>,
    pub clock: Arc<Clock>,
}

impl AppState {
    pub fn new(twin: TwinState, clock: Clock) -> Self {
        let (ticks, _) = broadcast::channel(64);
        Self { twin: Arc::new(RwLock::new(twin)), ticks, clock: Arc::new(clock) }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, TwinState> {
        self.twin.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, TwinState> {
        self.twin.write().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_request(detail: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "InvalidInput", detail: detail.into() }
    }

    fn not_found(code: &'static str, detail: impl Into<String>) -> Self {
        Self { status: StatusCode::NOT_FOUND, code, detail: detail.into() }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownPath(_) | EngineError::UnknownOrder(_) | EngineError::NoData(_) => StatusCode::NOT_FOUND,
            EngineError::InvalidInput(_) => StatusCode::BAD_REQUEST,
            EngineError::DuplicateOrder { .. } | EngineError::IllegalTransition(_) => StatusCode::CONFLICT,
            EngineError::Log(_) | EngineError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self { status, code: e.code(), detail: e.to_string() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "detail": self.detail }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/tree", get(tree))
        .route("/api/v1/status", get(status))
        .route("/api/v1/assets/{*rest}", get(asset_view))
        .route("/api/v1/context/latest", get(latest_context))
        .route("/api/v1/alarms", get(alarms))
        .route("/api/v1/workorders", get(list_orders).post(create_order))
        .route("/api/v1/workorders/{id}/transition", post(transition_order))
        .route("/api/v1/ingest", post(ingest))
        .route("/api/v1/stream", get(stream))
        .with_state(state)
}

async fn tree(State(app): State<AppState>) -> Json<serde_json::Value> {
    let doc = app.read().tree().to_document();
    Json(serde_json::to_value(doc).expect("tree serializes"))
}

async fn status(State(app): State<AppState>) -> ApiResult<crate::engine::StatusView> {
    Ok(Json(app.read().status()?))
}

#[derive(Debug, Deserialize)]
struct ViewQuery {
    window: Option<String>,
    horizon: Option<String>,
}

fn parse_path(text: &str) -> Result<AssetPath, ApiError> {
    text.parse().map_err(|_| ApiError::bad_request(format!("invalid asset path {text:?}")))
}

/// `GET /api/v1/assets/<path>/{snapshot|history|forecast}`; asset paths contain slashes, so the
/// view name is the last segment.
async fn asset_view(
    State(app): State<AppState>,
    Path(rest): Path<String>,
    Query(q): Query<ViewQuery>,
) -> Result<Response, ApiError> {
    let (path, view) = rest
        .rsplit_once('/')
        .ok_or_else(|| ApiError::not_found("UnknownView", format!("no view in {rest:?}")))?;
    let path = parse_path(path)?;
    let twin = app.read();
    Ok(match view {
        "snapshot" => Json(twin.snapshot(&path)?).into_response(),
        "history" => {
            let text = q.window.as_deref().unwrap_or("h48");
            let window = HistoryWindow::parse(text)
                .ok_or_else(|| ApiError::bad_request(format!("unknown window {text:?}")))?;
            Json(twin.history(&path, window)?).into_response()
        }
        "forecast" => {
            let text = q.horizon.as_deref().unwrap_or("m3");
            let horizon = ForecastHorizon::parse(text)
                .ok_or_else(|| ApiError::bad_request(format!("unknown horizon {text:?}")))?;
            Json(twin.forecast(&path, horizon)?).into_response()
        }
        other => return Err(ApiError::not_found("UnknownView", format!("unknown view {other:?}"))),
    })
}

async fn latest_context(State(app): State<AppState>) -> Result<Response, ApiError> {
    match app.read().latest_context() {
        Some(c) => Ok(Json(c.clone()).into_response()),
        None => Err(ApiError::not_found("NoData", "no context record yet")),
    }
}

async fn alarms(State(app): State<AppState>) -> Json<Vec<twin_core::eventlog::AlarmRecord>> {
    let twin = app.read();
    let mut out: Vec<_> = twin.alarms().cloned().collect();
    out.sort_by(|a, b| (a.detected_at, &a.alarm.id).cmp(&(b.detected_at, &b.alarm.id)));
    Json(out)
}

#[derive(Debug, Deserialize)]
struct OrderQuery {
    status: Option<String>,
}

async fn list_orders(
    State(app): State<AppState>,
    Query(q): Query<OrderQuery>,
) -> ApiResult<Vec<twin_core::workorder::WorkOrder>> {
    let status = match q.status.as_deref() {
        None => None,
        Some(text) => Some(
            WorkOrderStatus::parse(text).ok_or_else(|| ApiError::bad_request(format!("unknown status {text:?}")))?,
        ),
    };
    Ok(Json(app.read().list_orders(status)))
}

#[derive(Debug, Deserialize)]
struct CreateOrder {
    path: String,
    #[serde(default)]
    note: String,
}

async fn create_order(
    State(app): State<AppState>,
    body: Result<Json<CreateOrder>, JsonRejection>,
) -> Result<(StatusCode, Json<twin_core::workorder::WorkOrder>), ApiError> {
    let Json(body) = body?;
    let path = parse_path(&body.path)?;
    let now = app.clock.now();
    let order = app.write().create_manual(&path, body.note, now)?;
    Ok((StatusCode::CREATED, Json(order)))
}

#[derive(Debug, Deserialize)]
struct TransitionBody {
    to: String,
    #[serde(default)]
    slot: Option<Slot>,
}

async fn transition_order(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<TransitionBody>, JsonRejection>,
) -> ApiResult<twin_core::workorder::WorkOrder> {
    let Json(body) = body?;
    let to = WorkOrderStatus::parse(&body.to)
        .ok_or_else(|| ApiError::bad_request(format!("unknown status {:?}", body.to)))?;
    let now = app.clock.now();
    Ok(Json(app.write().transition_order(&id, to, body.slot, now)?))
}

#[derive(Debug, Serialize)]
struct IngestAck {
    accepted: usize,
    duplicates: usize,
}

/// Accepts a JSON array of `reading` and `context` events.
async fn ingest(
    State(app): State<AppState>,
    body: Result<Json<Vec<LogEvent>>, JsonRejection>,
) -> ApiResult<IngestAck> {
    let Json(events) = body?;
    let mut twin = app.write();
    let mut ack = IngestAck { accepted: 0, duplicates: 0 };
    for event in events {
        if twin.ingest(event)? {
            ack.accepted += 1;
        } else {
            ack.duplicates += 1;
        }
    }
    Ok(Json(ack))
}

/// One `tick` event per evaluation.
async fn stream(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = app.ticks.subscribe();
    let events = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(tick) => {
                    let event = Event::default().event("tick").json_data(&tick).expect("tick serializes");
                    return Some((Ok(event), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}
