use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{Duration, TimeZone, Utc};
use futures::StreamExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use twin_core::asset::{build_tree, demo_config};
use twin_core::eventlog::LogEvent;
use twin_core::telemetry::{ContextRecord, ParameterReading};
use twin_core::timefmt::Timestamp;
use twin_service::clock::Clock;
use twin_service::{router, AppState, EngineConfig, TwinState};

const AREA: &str = "library/lighting/floor-1/adult-reading";

fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
}

fn reading(param: &str, ts: Timestamp, value: f64, unit: &str) -> LogEvent {
    LogEvent::Reading(ParameterReading {
        ts,
        path: format!("{AREA}/{param}").parse().unwrap(),
        value,
        unit: unit.into(),
    })
}

fn twin() -> TwinState {
    TwinState::new(Arc::new(build_tree(demo_config()).unwrap()), EngineConfig::default())
}

/// Twin with 20 days of hourly illuminance decaying 2 lux/day from 480.
fn decaying_twin() -> TwinState {
    let mut twin = twin();
    for h in 0..20 * 24 {
        let ts = t0() + Duration::hours(h);
        twin.ingest(reading("illuminance", ts, 480.0 - 2.0 * h as f64 / 24.0, "lux")).unwrap();
    }
    twin
}

fn app(twin: TwinState) -> (Router, AppState) {
    let state = AppState::new(twin, Clock::stepped(t0() + Duration::days(20)));
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => request.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

#[tokio::test]
async fn tree_returns_demo_library() {
    let (app, _) = app(twin());
    let (status, body) = call(&app, "GET", "/api/v1/tree", None).await;
    assert_eq!(status, StatusCode::OK);
    let lighting = &body["building"]["children"][0];
    assert_eq!(lighting["id"], "lighting");
    assert_eq!(lighting["children"].as_array().unwrap().len(), 3);
    assert_eq!(body["area_parameters"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn status_carries_three_horizons() {
    let (app, _) = app(decaying_twin());
    let (status, body) = call(&app, "GET", "/api/v1/status", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["as_of"], "2025-01-20T23:00:00Z");
    let area = &body["building"]["children"][0]["children"][0]["children"][0];
    assert_eq!(area["id"], "adult-reading");
    // 440 lux now (level 3); trend −2/day passes 300 within 90 days and 100 within 180
    assert_eq!(area["now"], 3);
    assert_eq!(area["at_m3"], 2);
    assert_eq!(area["at_m6"], 1);
}

#[tokio::test]
async fn snapshot_of_area_and_errors() {
    let (app, _) = app(decaying_twin());
    let (status, body) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/snapshot"), None).await;
    assert_eq!(status, StatusCode::OK);
    let entries = body["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 10);
    assert_eq!(entries[0]["parameter"], "illuminance");
    assert_eq!(entries[0]["level"], 3);
    assert_eq!(entries[1]["level"], Value::Null);
    assert_eq!(body["area_level"], 3);

    let (status, body) = call(&app, "GET", "/api/v1/assets/library/lighting/floor-9/snapshot", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownPath");

    let (status, body) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/illuminance/snapshot"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "InvalidInput");

    let (status, _) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/bogus"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn history_windows() {
    let (app, _) = app(decaying_twin());
    for (window, n) in [("h12", 12), ("h48", 48), ("week", 7), ("month", 30), ("year", 52)] {
        let uri = format!("/api/v1/assets/{AREA}/illuminance/history?window={window}");
        let (status, body) = call(&app, "GET", &uri, None).await;
        assert_eq!(status, StatusCode::OK, "{window}");
        assert_eq!(body["buckets"].as_array().unwrap().len(), n, "{window}");
    }
    let (_, body) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/illuminance/history?window=h12"), None).await;
    let last = &body["buckets"][11];
    assert_eq!(last["start"], "2025-01-20T23:00:00Z");
    assert_eq!(last["count"], 1);
    assert_eq!(last["level"], 3);
    assert_eq!(body["end"], "2025-01-21T00:00:00Z");

    let (status, body) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/illuminance/history?window=decade"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "InvalidInput");
}

#[tokio::test]
async fn forecast_view() {
    let (app, _) = app(decaying_twin());
    let (status, body) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/illuminance/forecast?horizon=m3"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["horizon"], "m3");
    assert_eq!(body["model"]["method"], "HoltLinear");
    let trend = body["model"]["trend"].as_f64().unwrap();
    assert!((trend + 2.0).abs() < 1e-6, "{trend}");
    assert_eq!(body["predicted_level"], 2);
    assert_eq!(body["current_level"], 3);
    let days = body["days_to_breach"].as_f64().unwrap();
    assert!(days > 65.0 && days < 75.0, "{days}");

    let (status, _) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/illuminance/forecast?horizon=m12"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, "GET", &format!("/api/v1/assets/{AREA}/cri/forecast"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "NoData");
}

#[tokio::test]
async fn context_latest() {
    let (app, state) = app(twin());
    let (status, body) = call(&app, "GET", "/api/v1/context/latest", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "NoData");
    let record = ContextRecord {
        ts: t0(),
        latitude: 60.61,
        longitude: 15.63,
        outdoor_illuminance: 1200.0,
        cloud_cover: 0.3,
        local_time: "2025-01-01T01:00:00+01:00".into(),
    };
    state.write().ingest(LogEvent::Context(record)).unwrap();
    let (status, body) = call(&app, "GET", "/api/v1/context/latest", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"ts":"2025-01-01T00:00:00Z","lat":60.61,"lon":15.63,"oi":1200.0,"cc":0.3,"local":"2025-01-01T01:00:00+01:00"}));
}

#[tokio::test]
async fn manual_work_order_round_trip() {
    let (app, _) = app(twin());
    let (status, order) = call(&app, "POST", "/api/v1/workorders", Some(json!({"path": AREA, "note": "lamp out"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(order["kind"], "CM");
    assert_eq!(order["status"], "Open");
    assert_eq!(order["trigger"], json!({"type": "manual", "note": "lamp out"}));
    let id = order["id"].as_str().unwrap().to_string();

    let (status, body) = call(&app, "POST", "/api/v1/workorders", Some(json!({"path": AREA, "note": "again"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "DuplicateOrder");

    let (status, body) = call(&app, "POST", "/api/v1/workorders", Some(json!({"path": "library/attic"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownPath");

    let (status, body) = call(&app, "POST", "/api/v1/workorders", Some(json!({"note": "no path"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "InvalidInput");

    let (status, list) = call(&app, "GET", "/api/v1/workorders?status=open", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 1);
    let (status, _) = call(&app, "GET", "/api/v1/workorders?status=lost", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let uri = format!("/api/v1/workorders/{id}/transition");
    let (status, body) = call(&app, "POST", &uri, Some(json!({"to": "Done"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "IllegalTransition");
    let (status, _) = call(&app, "POST", &uri, Some(json!({"to": "Scheduled"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let slot = json!({"day": "2025-01-21", "tech": "tech-1"});
    let (status, body) = call(&app, "POST", &uri, Some(json!({"to": "Scheduled", "slot": slot}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["slot"], slot);
    for to in ["InProgress", "Done"] {
        let (status, body) = call(&app, "POST", &uri, Some(json!({"to": to}))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["status"], to);
    }
    let (status, body) = call(&app, "POST", "/api/v1/workorders/CM-0000/transition", Some(json!({"to": "Done"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownOrder");
    let (_, list) = call(&app, "GET", "/api/v1/workorders?status=Done", None).await;
    assert_eq!(list[0]["completed_at"], "2025-01-21T00:00:00Z");
}

#[tokio::test]
async fn ingest_endpoint_counts_duplicates() {
    let (app, _) = app(twin());
    let batch = json!([
        {"t":"reading","ts":"2025-01-01T10:00:00Z","path":format!("{AREA}/illuminance"),"value":480.0,"unit":"lux"},
        {"t":"reading","ts":"2025-01-01T10:00:00Z","path":format!("{AREA}/illuminance"),"value":480.0,"unit":"lux"},
        {"t":"context","ts":"2025-01-01T10:00:00Z","lat":60.61,"lon":15.63,"oi":12000.0,"cc":0.4,"local":"2025-01-01T11:00:00+01:00"}
    ]);
    let (status, body) = call(&app, "POST", "/api/v1/ingest", Some(batch)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"accepted": 2, "duplicates": 1}));
    let bad = json!([{"t":"reading","ts":"2025-01-01T10:00:00Z","path":format!("{AREA}/illuminance"),"value":-5.0,"unit":"lux"}]);
    let (status, body) = call(&app, "POST", "/api/v1/ingest", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "InvalidInput");
}

#[tokio::test]
async fn alarms_listed_after_tick() {
    let mut twin = twin();
    twin.ingest(reading("illuminance", t0(), 500.0, "lux")).unwrap();
    twin.ingest(reading("illuminance", t0() + Duration::hours(1), 20.0, "lux")).unwrap();
    twin.evaluate_once(t0() + Duration::hours(1)).unwrap();
    let (app, _) = app(twin);
    let (status, body) = call(&app, "GET", "/api/v1/alarms", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body[0]["diagnosis"]["causes"][0]["code"], "LAMP_FAILURE");
    assert_eq!(body[0]["diagnosis"]["where"][0], "library/lighting/floor-1");
    let (_, orders) = call(&app, "GET", "/api/v1/workorders", None).await;
    assert_eq!(orders[0]["trigger"]["alarm_id"], body[0]["alarm"]["id"]);
}

#[tokio::test]
async fn stream_pushes_ticks() {
    let (app, state) = app(decaying_twin());
    let response = app
        .clone()
        .oneshot(Request::get("/api/v1/stream").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    assert_eq!(response.headers()["content-type"], "text/event-stream");
    let tick = state.write().evaluate_once(t0() + Duration::days(20)).unwrap();
    state.ticks.send(tick).unwrap();
    let mut body = response.into_body().into_data_stream();
    let frame = body.next().await.unwrap().unwrap();
    let text = String::from_utf8(frame.to_vec()).unwrap();
    assert!(text.starts_with("event: tick\ndata: "), "{text}");
    let data: Value = serde_json::from_str(text.lines().nth(1).unwrap().trim_start_matches("data: ")).unwrap();
    assert_eq!(data["ts"], "2025-01-21T00:00:00Z");
    assert_eq!(data["building"]["now"], 3);
    assert_eq!(data["forecasts_refreshed"], true);
}
