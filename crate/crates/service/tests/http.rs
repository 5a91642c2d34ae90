use aiad_service::{router, AppState, API_VERSION};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(state: &AppState, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = router(state.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn small(domain: &str) -> Value {
    json!({
        "version": API_VERSION,
        "domain": domain,
        "seed": 11,
        "particles": 32,
        "planner": { "iterations": 200, "subsample": 16 },
    })
}

async fn create(state: &AppState, domain: &str) -> (String, Value) {
    let (status, body) = call(state, Method::POST, "/sessions", Some(small(domain))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    (body["id"].as_str().unwrap().to_string(), body)
}

#[tokio::test]
async fn create_returns_a_versioned_session() {
    let state = AppState::new();
    let (id, body) = create(&state, "daytrip").await;
    assert_eq!(body["version"], API_VERSION);
    assert_eq!(body["session"]["interactions"], 0);
    assert_eq!(body["session"]["done"], false);
    assert!(!body["session"]["advice"].is_null());
    assert!(body["session"]["belief"]["omega_mean"].is_array());
    assert!(body["session"]["details"]["minutes"].is_number());
    assert_eq!(body["instance"].as_array().unwrap().len(), 30);
    assert_eq!(state.len(), 1);

    let (status, shown) = call(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(shown["version"], API_VERSION);
    assert_eq!(shown["session"], body["session"]);
}

#[tokio::test]
async fn accepting_advice_round_trip() {
    let state = AppState::new();
    let (id, created) = create(&state, "daytrip").await;

    let (status, advice) = call(&state, Method::GET, &format!("/sessions/{id}/advice"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(advice["version"], API_VERSION);
    assert_eq!(advice["step"], 0);
    let action = advice["advice"].clone();
    assert!(!action.is_null());

    // Advice is cached until the agent acts.
    let (_, again) = call(&state, Method::GET, &format!("/sessions/{id}/advice"), None).await;
    assert_eq!(again["advice"], action);

    let (status, acted) = call(
        &state,
        Method::POST,
        &format!("/sessions/{id}/actions"),
        Some(json!({ "version": API_VERSION, "action": action })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{acted}");
    assert_eq!(acted["version"], API_VERSION);
    assert_eq!(acted["record"]["accepted"], true);
    assert_eq!(acted["record"]["advice"], action);
    assert_eq!(acted["session"]["interactions"], 1);
    assert_eq!(acted["session"]["history"].as_array().unwrap().len(), 1);
    // The next advice is planned before the response is sent.
    let next = acted["session"]["advice"].clone();
    assert!(!next.is_null());
    let (_, advice) = call(&state, Method::GET, &format!("/sessions/{id}/advice"), None).await;
    assert_eq!((advice["step"].clone(), advice["advice"].clone()), (json!(1), next));
    assert_ne!(acted["session"]["belief"], created["session"]["belief"]);
}

#[tokio::test]
async fn illegal_action_is_rejected_without_state_change() {
    let state = AppState::new();
    let (id, _) = create(&state, "daytrip").await;
    let (_, before) = call(&state, Method::GET, &format!("/sessions/{id}"), None).await;

    let (status, err) = call(
        &state,
        Method::POST,
        &format!("/sessions/{id}/actions"),
        Some(json!({ "action": { "toggle": 999 } })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["version"], API_VERSION);
    assert_eq!(err["error"]["code"], "illegal_action");

    let (_, after) = call(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(after, before);
}

#[tokio::test]
async fn inventory_sessions_take_production_vectors() {
    let state = AppState::new();
    let (id, created) = create(&state, "inventory").await;
    assert_eq!(created["instance"].as_array().unwrap().len(), 20);
    let (status, acted) = call(
        &state,
        Method::POST,
        &format!("/sessions/{id}/actions"),
        Some(json!({ "action": [2, 0, 4] })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{acted}");
    assert_eq!(acted["record"]["accepted"], json!(acted["record"]["advice"] == json!([2, 0, 4])));
    assert_eq!(acted["session"]["step"], 1);
    assert!(acted["session"]["belief"]["theta_mean"]["theta"].is_number());
}

#[tokio::test]
async fn errors_are_versioned() {
    let state = AppState::new();
    let missing = "00000000-0000-0000-0000-000000000000";
    let (status, body) = call(&state, Method::GET, &format!("/sessions/{missing}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["version"], API_VERSION);

    let (status, body) = call(&state, Method::GET, "/sessions/not-a-uuid/advice", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");

    let (status, body) = call(&state, Method::POST, "/sessions", Some(json!({ "domain": "chess" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["version"], API_VERSION);

    let mut req = small("daytrip");
    req["planner"] = json!({ "iteratons": 5 });
    let (status, body) = call(&state, Method::POST, "/sessions", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_request");

    let mut req = small("daytrip");
    req["version"] = json!("0");
    let (status, body) = call(&state, Method::POST, "/sessions", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "unsupported_version");
    assert!(state.is_empty());
}

#[tokio::test]
async fn finished_sessions_reject_actions() {
    let state = AppState::new();
    let (id, _) = create(&state, "daytrip").await;
    let uri = format!("/sessions/{id}/actions");
    let (status, body) = call(&state, Method::POST, &uri, Some(json!({ "action": "noop" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["session"]["done"], true);
    assert_eq!(body["session"]["advice"], Value::Null);
    let (status, err) = call(&state, Method::POST, &uri, Some(json!({ "action": { "toggle": 0 } }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "illegal_action");
}

#[tokio::test]
async fn snapshots_round_trip_losslessly() {
    let state = AppState::new();
    let (id, _) = create(&state, "inventory").await;
    let (_, shown) = call(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    let view: aiad_core::session::SessionView = serde_json::from_value(shown["session"].clone()).unwrap();
    assert_eq!(serde_json::to_value(&view).unwrap(), shown["session"]);
}
