use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::HeaderMap;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use wrangle_core::{LlmClient, StageTag};
use wrangle_service::HttpLlm;

type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

async fn completions(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string);
    seen.lock().unwrap().push((auth, body));
    Json(json!({"choices": [{"message": {"role": "assistant", "content": "{\"type\":\"finish\",\"summary\":\"ok\"}"}}]}))
}

#[tokio::test(flavor = "multi_thread")]
async fn posts_deterministic_chat_completion() {
    let seen: Seen = Arc::default();
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(seen.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let llm = HttpLlm::new(format!("http://{addr}/v1/chat/completions"), "test-model", Some("k".into()));
    let reply = tokio::task::spawn_blocking(move || llm.complete(StageTag::AnalyzeInit, "hello")).await.unwrap().unwrap();
    assert_eq!(reply, "{\"type\":\"finish\",\"summary\":\"ok\"}");

    let seen = seen.lock().unwrap();
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer k"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"], json!([{"role": "user", "content": "hello"}]));
    assert_eq!((body["temperature"].as_f64(), body["top_p"].as_f64()), (Some(0.0), Some(1.0)));
    assert_eq!((body["frequency_penalty"].as_f64(), body["presence_penalty"].as_f64()), (Some(0.0), Some(0.0)));
}

#[tokio::test(flavor = "multi_thread")]
async fn transport_failures_are_errors() {
    let llm = HttpLlm::new("http://127.0.0.1:9/none", "m", None).with_timeout(std::time::Duration::from_secs(2));
    let err = tokio::task::spawn_blocking(move || llm.complete(StageTag::Plan, "x")).await.unwrap().unwrap_err();
    assert!(matches!(err, wrangle_core::LlmError::Transport(_)));
}
