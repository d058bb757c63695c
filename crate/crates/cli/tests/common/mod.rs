#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use trajedit::api::{router, AppState, ServiceConfig};
use trajedit_engine::dataset::load_corpus;
use trajedit_engine::llm::{FixtureStore, MockTransport, Transport};
use trajedit_engine::session::SessionConfig;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn fixtures() -> FixtureStore {
    FixtureStore::load(data_dir().join("fixtures")).unwrap()
}

pub fn app_with(transport: Arc<dyn Transport>) -> Router {
    router(AppState::new(ServiceConfig {
        transport,
        session: SessionConfig::default(),
        corpus: load_corpus(data_dir().join("corpus.jsonl")).unwrap(),
    }))
}

pub fn mock_app() -> Router {
    app_with(Arc::new(MockTransport::new(fixtures())))
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<&str>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

/// Polls until the session leaves `awaiting_llm`.
pub async fn settle(app: &Router, id: &str) -> Value {
    for _ in 0..1000 {
        let (status, view) = call(app, "GET", &format!("/api/sessions/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if view["state"] != "awaiting_llm" {
            return view;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("session {id} never left awaiting_llm");
}

pub fn go_left_request(fixture_id: &str) -> String {
    serde_json::json!({
        "instruction": "Go left",
        "scene": {"objects": [{"label": "box", "position": [5.0, 5.0, 0.0]}]},
        "trajectory": {"waypoints": [[0, 0, 0, 1], [0, 5, 0, 1], [0, 10, 0, 1], [0, 15, 0, 1]]},
        "fixture_id": fixture_id,
    })
    .to_string()
}
