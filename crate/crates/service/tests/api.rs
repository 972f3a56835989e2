use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use wrangle_core::{LlmClient, MockLlm};
use wrangle_service::{router, AppState};

fn scenario(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scenario").join(rel)
}

fn app_with(transcript: String) -> Router {
    let state = AppState::new(
        Box::new(move || Ok(Arc::new(MockLlm::from_json(&transcript).map_err(|e| e.to_string())?) as Arc<dyn LlmClient>)),
        3,
    );
    router(Arc::new(state))
}

fn app() -> Router {
    app_with(std::fs::read_to_string(scenario("transcript.json")).unwrap())
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Value {
    let (status, bytes) = send(app, method, uri, body).await;
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(status, StatusCode::OK, "{method} {uri}: {text}");
    serde_json::from_str(&text).unwrap()
}

async fn upload(app: &Router, sid: &str, file: &str, bytes: &[u8]) -> (StatusCode, Value) {
    let boundary = "XBOUNDARYX";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file}\"\r\nContent-Type: text/csv\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::builder()
        .method("POST")
        .uri(format!("/sessions/{sid}/tables"))
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn new_session(app: &Router) -> String {
    call(app, "POST", "/sessions", None).await["id"].as_str().unwrap().to_string()
}

async fn load_tables(app: &Router, sid: &str) {
    for name in ["Table1", "Table2"] {
        let bytes = std::fs::read(scenario(&format!("tables/{name}.csv"))).unwrap();
        let (status, body) = upload(app, sid, &format!("{name}.csv"), &bytes).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["name"], format!("{name}_v0.csv"));
    }
}

fn texts(steps: &Value) -> Vec<String> {
    steps.as_array().unwrap().iter().map(|s| s["text"].as_str().unwrap().to_string()).collect()
}

/// Drives the scenario replay script through the HTTP API and returns the
/// session id and the id of the last script.
async fn drive_scenario(app: &Router) -> (String, u64) {
    let sid = new_session(app).await;
    load_tables(app, &sid).await;
    let base = format!("/sessions/{sid}");
    call(app, "POST", &format!("{base}/demo/record"), Some(json!({"on": true}))).await;
    let e1 = call(app, "POST", &format!("{base}/demo/events"), Some(json!({"kind": "Delete", "table": "Table1_v0.csv", "column": "C"}))).await;
    assert_eq!(e1["merged_diff_len"], 1);
    let e2 = call(
        app,
        "POST",
        &format!("{base}/demo/events"),
        Some(json!({"kind": "DragDrop", "table": "Table1_v0.csv", "payload": {"From": "B", "To": "A"}})),
    )
    .await;
    assert_eq!(e2["merged_diff_len"], 2);
    call(app, "POST", &format!("{base}/demo/record"), Some(json!({"on": false}))).await;

    let q = call(app, "POST", &format!("{base}/chat"), Some(json!({"text": ""}))).await;
    assert_eq!(q["kind"], "question");
    assert_eq!(q["choices"], json!(["Yes", "No", "Other (please specify)"]));
    let steps = call(app, "POST", &format!("{base}/chat/answer"), Some(json!({"choice": "Yes"}))).await;
    assert_eq!(steps["kind"], "steps");
    let first = steps["script_id"].as_u64().unwrap();
    call(app, "POST", &format!("{base}/scripts/{first}/run"), None).await;

    let merge = call(
        app,
        "POST",
        &format!("{base}/chat"),
        Some(json!({"text": "Merge the tables into a single table by matching the StudentID"})),
    )
    .await;
    let second = merge["script_id"].as_u64().unwrap();
    call(app, "POST", &format!("{base}/scripts/{second}/run"), None).await;

    let q = call(
        app,
        "POST",
        &format!("{base}/chat"),
        Some(json!({"text": "Please eliminate rows if containing an excessive amount of missing values. Then populate the remaining missing fields with column mean values."})),
    )
    .await;
    assert_eq!(q["kind"], "question");
    let cleaning = call(app, "POST", &format!("{base}/chat/answer"), Some(json!({"choice": "30%"}))).await;
    let third = cleaning["script_id"].as_u64().unwrap();

    let mut edited = texts(&cleaning["steps"]);
    edited[0] = "Drop the rows in the given table(s) if there are more than 50% of missing values.".into();
    let after_edit = call(app, "PATCH", &format!("{base}/scripts/{third}/steps"), Some(json!({"steps": edited}))).await;
    assert_eq!(after_edit["route"], "edit");
    let mut added = texts(&after_edit["steps"]);
    added.push("Sort the table alphabetically by the values in the column Name.".into());
    let after_add = call(app, "PATCH", &format!("{base}/scripts/{third}/steps"), Some(json!({"steps": added}))).await;
    assert_eq!(after_add["route"], "add");
    let report = call(app, "POST", &format!("{base}/scripts/{third}/run"), None).await;
    assert_eq!(report["outputs"], json!(["merged_v1.csv", "merged_v2.csv", "merged_v3.csv"]));
    (sid, third)
}

#[tokio::test]
async fn scenario_over_the_api_matches_golden() {
    let app = app();
    let (sid, _) = drive_scenario(&app).await;
    let (status, csv) = send(&app, "GET", &format!("/sessions/{sid}/tables/merged_v3.csv"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(csv).unwrap(), std::fs::read_to_string(scenario("golden.csv")).unwrap());
    let graph = call(&app, "GET", &format!("/sessions/{sid}/provenance"), None).await;
    let into_merged = graph["edges"].as_array().unwrap().iter().filter(|e| e["to"] == "merged_v0.csv").count();
    assert_eq!(into_merged, 2);
}

#[tokio::test]
async fn running_twice_appends_versions_and_keeps_originals() {
    let app = app();
    let (sid, script) = drive_scenario(&app).await;
    let originals = [
        send(&app, "GET", &format!("/sessions/{sid}/tables/Table1_v0.csv"), None).await.1,
        send(&app, "GET", &format!("/sessions/{sid}/tables/Table2_v0.csv"), None).await.1,
    ];
    let again = call(&app, "POST", &format!("/sessions/{sid}/scripts/{script}/run"), None).await;
    // The cleaned table has no sparse rows left, so the conditional drop is
    // skipped and writes nothing.
    assert_eq!(again["outputs"], json!(["merged_v4.csv", "merged_v5.csv"]));
    let v3 = send(&app, "GET", &format!("/sessions/{sid}/tables/merged_v3.csv"), None).await.1;
    let v5 = send(&app, "GET", &format!("/sessions/{sid}/tables/merged_v5.csv"), None).await.1;
    assert_eq!(v3, v5);
    assert_eq!(send(&app, "GET", &format!("/sessions/{sid}/tables/Table1_v0.csv"), None).await.1, originals[0]);
    assert_eq!(send(&app, "GET", &format!("/sessions/{sid}/tables/Table2_v0.csv"), None).await.1, originals[1]);
}

#[tokio::test]
async fn fresh_uploads_are_isolated_nodes() {
    let app = app();
    let sid = new_session(&app).await;
    load_tables(&app, &sid).await;
    let graph = call(&app, "GET", &format!("/sessions/{sid}/provenance"), None).await;
    assert_eq!(graph["nodes"], json!(["Table1_v0.csv", "Table2_v0.csv"]));
    assert_eq!(graph["edges"], json!([]));
}

#[tokio::test]
async fn reads_do_not_change_state() {
    let app = app();
    let sid = new_session(&app).await;
    load_tables(&app, &sid).await;
    let first = send(&app, "GET", &format!("/sessions/{sid}/provenance"), None).await;
    send(&app, "GET", &format!("/sessions/{sid}/tables/Table1_v0.csv"), None).await;
    assert_eq!(send(&app, "GET", &format!("/sessions/{sid}/provenance"), None).await, first);
}

#[tokio::test]
async fn errors_are_machine_readable() {
    let app = app();
    let (status, body) = send(&app, "GET", "/sessions/nope/provenance", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["code"], "not_found");

    let sid = new_session(&app).await;
    let req = Request::builder()
        .method("POST")
        .uri(format!("/sessions/{sid}/chat"))
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["code"], "bad_request");

    let (status, body) =
        send(&app, "POST", &format!("/sessions/{sid}/demo/events"), Some(json!({"kind": "Delete", "table": "t.csv", "column": "A"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(serde_json::from_slice::<Value>(&body).unwrap()["message"].is_string());

    let (status, _) = send(&app, "GET", &format!("/sessions/{sid}/tables/ghost_v0.csv"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(&app, "POST", &format!("/sessions/{sid}/scripts/9/run"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = upload(&app, &sid, "bad name!.csv", b"a\n1\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_request");
}

#[tokio::test]
async fn failed_synthesis_returns_diagnostics() {
    let broken = json!({"required_tables": ["Table1.csv"], "program": [{"function": "drop", "table": "Table1.csv", "axis": 1}]});
    let mut transcript = vec![
        json!({"stage": "AnalyzeInit", "response": {"type": "finish", "summary": "Drop a column"}}),
        json!({"stage": "Plan", "response": [{"function": "drop", "description": "Drop a column"}]}),
        json!({"stage": "Generate", "response": broken}),
    ];
    transcript.extend((0..3).map(|_| json!({"stage": "GenerateWithError", "response": broken})));
    let app = app_with(Value::Array(transcript).to_string());
    let sid = new_session(&app).await;
    load_tables(&app, &sid).await;
    let (status, body) = send(&app, "POST", &format!("/sessions/{sid}/chat"), Some(json!({"text": "drop it"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["code"], "synthesis_failed");
    assert_eq!(body["diagnostics"][0]["code"], "BadArity");
}

#[tokio::test]
async fn save_and_remove_scripts() {
    let app = app();
    let sid = new_session(&app).await;
    load_tables(&app, &sid).await;
    call(&app, "POST", &format!("/sessions/{sid}/demo/record"), Some(json!({"on": true}))).await;
    call(&app, "POST", &format!("/sessions/{sid}/demo/events"), Some(json!({"kind": "Delete", "table": "Table1_v0.csv", "column": "C"}))).await;
    call(&app, "POST", &format!("/sessions/{sid}/chat"), Some(json!({"text": ""}))).await;
    let steps = call(&app, "POST", &format!("/sessions/{sid}/chat/answer"), Some(json!({"choice": "Yes"}))).await;
    let script = steps["script_id"].as_u64().unwrap();
    let saved = call(&app, "POST", &format!("/sessions/{sid}/scripts/{script}/save"), None).await;
    assert_eq!(saved["saved"], true);
    let removed = call(&app, "POST", &format!("/sessions/{sid}/scripts/{script}/remove"), None).await;
    assert_eq!(removed["removed"], true);
    let (status, _) = send(&app, "POST", &format!("/sessions/{sid}/scripts/{script}/run"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

struct SlowLlm;

impl LlmClient for SlowLlm {
    fn complete(&self, _: wrangle_core::StageTag, _: &str) -> Result<String, wrangle_core::LlmError> {
        std::thread::sleep(std::time::Duration::from_millis(600));
        Ok(json!({"type": "finish", "summary": "nothing"}).to_string())
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn slow_model_call_does_not_block_other_sessions() {
    let app = router(Arc::new(AppState::new(Box::new(|| Ok(Arc::new(SlowLlm) as Arc<dyn LlmClient>)), 3)));
    let (a, b) = (new_session(&app).await, new_session(&app).await);
    let slow_app = app.clone();
    let slow = tokio::spawn(async move { send(&slow_app, "POST", &format!("/sessions/{a}/chat"), Some(json!({"text": "hi"}))).await });
    tokio::time::sleep(std::time::Duration::from_millis(100)).await;
    let start = std::time::Instant::now();
    call(&app, "GET", &format!("/sessions/{b}/provenance"), None).await;
    assert!(start.elapsed() < std::time::Duration::from_millis(300));
    assert_eq!(slow.await.unwrap().0, StatusCode::OK);
}

#[tokio::test]
async fn snapshot_lists_sessions() {
    let transcript = std::fs::read_to_string(scenario("transcript.json")).unwrap();
    let state = Arc::new(AppState::new(
        Box::new(move || Ok(Arc::new(MockLlm::from_json(&transcript).map_err(|e| e.to_string())?) as Arc<dyn LlmClient>)),
        3,
    ));
    let app = router(state.clone());
    let sid = new_session(&app).await;
    load_tables(&app, &sid).await;
    let dir = tempfile_dir();
    let path = dir.join("snapshot.json");
    state.write_snapshot(&path).unwrap();
    let image: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert!(image["sessions"][&sid]["store"].is_object());
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wrangle-snapshot-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
