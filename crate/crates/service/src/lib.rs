//! HTTP API over wrangling sessions.
//!
//! Sessions live in memory. Each one sits behind its own mutex and every
//! handler touching a session runs on the blocking pool, so a long model
//! call holds up only its own session.

pub mod config;
pub mod http_llm;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use wrangle_core::{Agent, DemoEvent, LlmClient, MockLlm, Session, SessionError};

pub use config::{Config, ConfigError, ModelSource};
pub use http_llm::HttpLlm;

/// Builds the model client for one new session.
pub type ClientFactory = dyn Fn() -> Result<Arc<dyn LlmClient>, String> + Send + Sync;

#[derive(Debug)]
pub struct ApiError(pub SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn internal(msg: impl Into<String>) -> ApiError {
    ApiError(SessionError::Io(msg.into()))
}

pub struct AppState {
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    clients: Box<ClientFactory>,
    max_repairs: usize,
}

impl AppState {
    pub fn new(clients: Box<ClientFactory>, max_repairs: usize) -> AppState {
        AppState { sessions: Mutex::new(BTreeMap::new()), next_id: AtomicU64::new(1), clients, max_repairs }
    }

    /// State whose sessions draw replies from `config`'s model source.
    pub fn from_config(config: &Config) -> AppState {
        let clients: Box<ClientFactory> = match config.model.clone() {
            ModelSource::Transcript(path) => Box::new(move || {
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let mock = MockLlm::from_json(&text).map_err(|e| e.to_string())?;
                Ok(Arc::new(mock) as Arc<dyn LlmClient>)
            }),
            ModelSource::Http { endpoint, model, key } => {
                let shared: Arc<dyn LlmClient> = Arc::new(HttpLlm::new(endpoint, model, key));
                Box::new(move || Ok(shared.clone()))
            }
        };
        AppState::new(clients, config.max_repairs)
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let sessions = self.sessions.lock().map_err(|_| internal("session table poisoned"))?;
        sessions.get(id).cloned().ok_or_else(|| ApiError(SessionError::NotFound(format!("session {id}"))))
    }

    fn create(&self) -> ApiResult<String> {
        let client = (self.clients)().map_err(internal)?;
        let agent = Agent::new(client).with_max_repairs(self.max_repairs);
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let mut sessions = self.sessions.lock().map_err(|_| internal("session table poisoned"))?;
        sessions.insert(id.clone(), Arc::new(Mutex::new(Session::new(Arc::new(agent)))));
        Ok(id)
    }

    /// `{sessions: {id: snapshot}}` for every live session.
    pub fn snapshot(&self) -> Value {
        let sessions = match self.sessions.lock() {
            Ok(s) => s.clone(),
            Err(_) => return json!({ "sessions": {} }),
        };
        let images: serde_json::Map<String, Value> = sessions
            .into_iter()
            .filter_map(|(id, s)| s.lock().ok().map(|s| (id, s.snapshot())))
            .collect();
        json!({ "sessions": images })
    }

    pub fn write_snapshot(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.snapshot())?)
    }
}

type Shared = Arc<AppState>;

/// Runs `f` on the session `id` on the blocking pool.
async fn with_session<T, F>(state: &Shared, id: &str, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
{
    let session = state.session(id)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = session.lock().map_err(|_| internal("session poisoned by an earlier panic"))?;
        f(&mut guard).map_err(ApiError)
    })
    .await
    .map_err(|e| internal(e.to_string()))?
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError(SessionError::BadRequest(format!("invalid JSON body: {e}"))))
}

fn script_id(sid: &str) -> ApiResult<u64> {
    sid.parse().map_err(|_| ApiError(SessionError::NotFound(format!("script {sid}"))))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/tables", post(upload_table))
        .route("/sessions/{id}/tables/{rendered}", get(get_table))
        .route("/sessions/{id}/demo/events", post(demo_event))
        .route("/sessions/{id}/demo/record", post(demo_record))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/chat/answer", post(answer))
        .route("/sessions/{id}/scripts/{sid}/steps", patch(edit_steps))
        .route("/sessions/{id}/scripts/{sid}/{action}", post(script_action))
        .route("/sessions/{id}/provenance", get(provenance))
        .with_state(state)
}

async fn create_session(State(state): State<Shared>) -> ApiResult<Json<Value>> {
    let id = tokio::task::spawn_blocking(move || state.create()).await.map_err(|e| internal(e.to_string()))??;
    Ok(Json(json!({ "id": id })))
}

async fn upload_table(State(state): State<Shared>, UrlPath(id): UrlPath<String>, mut form: Multipart) -> ApiResult<Json<Value>> {
    let bad = |m: String| ApiError(SessionError::BadRequest(m));
    let mut file: Option<(String, Bytes)> = None;
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        let Some(name) = field.file_name().map(str::to_string) else { continue };
        if file.is_some() {
            return Err(bad("upload one CSV file per request".into()));
        }
        file = Some((name, field.bytes().await.map_err(|e| bad(e.to_string()))?));
    }
    let (name, bytes) = file.ok_or_else(|| bad("multipart body has no file part".into()))?;
    let rendered = with_session(&state, &id, move |s| s.upload_csv(&name, &bytes)).await?;
    Ok(Json(json!({ "name": rendered })))
}

async fn get_table(State(state): State<Shared>, UrlPath((id, rendered)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let csv = with_session(&state, &id, move |s| s.table_csv(&rendered)).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn demo_event(State(state): State<Shared>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let event: DemoEvent = body(&bytes)?;
    let len = with_session(&state, &id, move |s| s.demo_event(event)).await?;
    Ok(Json(json!({ "merged_diff_len": len })))
}

#[derive(Deserialize)]
struct RecordBody {
    on: bool,
}

async fn demo_record(State(state): State<Shared>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let RecordBody { on } = body(&bytes)?;
    with_session(&state, &id, move |s| {
        s.set_recording(on);
        Ok(())
    })
    .await?;
    Ok(Json(json!({})))
}

#[derive(Deserialize)]
struct ChatBody {
    #[serde(default)]
    text: String,
}

async fn chat(State(state): State<Shared>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let ChatBody { text } = body(&bytes)?;
    let reply = with_session(&state, &id, move |s| s.chat(&text)).await?;
    Ok(Json(serde_json::to_value(reply).map_err(|e| internal(e.to_string()))?))
}

#[derive(Deserialize)]
struct AnswerBody {
    #[serde(default)]
    choice: Option<String>,
    #[serde(default)]
    other_text: Option<String>,
}

async fn answer(State(state): State<Shared>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let AnswerBody { choice, other_text } = body(&bytes)?;
    let reply = with_session(&state, &id, move |s| s.answer(choice.as_deref(), other_text.as_deref())).await?;
    Ok(Json(serde_json::to_value(reply).map_err(|e| internal(e.to_string()))?))
}

#[derive(Deserialize)]
struct StepsBody {
    steps: Vec<String>,
}

async fn edit_steps(
    State(state): State<Shared>,
    UrlPath((id, sid)): UrlPath<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Json<Value>> {
    let sid = script_id(&sid)?;
    let StepsBody { steps } = body(&bytes)?;
    let (steps, route) = with_session(&state, &id, move |s| s.update_steps(sid, &steps)).await?;
    Ok(Json(json!({ "steps": steps, "route": route })))
}

async fn script_action(
    State(state): State<Shared>,
    UrlPath((id, sid, action)): UrlPath<(String, String, String)>,
) -> ApiResult<Json<Value>> {
    let sid = script_id(&sid)?;
    let reply = with_session(&state, &id, move |s| {
        Ok(match action.as_str() {
            "run" => serde_json::to_value(s.run(sid)?).expect("report serializes"),
            "save" => {
                s.save(sid)?;
                json!({ "script_id": sid, "saved": true })
            }
            "remove" => {
                s.remove(sid)?;
                json!({ "script_id": sid, "removed": true })
            }
            "regenerate" => json!({ "script_id": sid, "steps": s.regenerate(sid)? }),
            other => return Err(SessionError::NotFound(format!("script action {other}"))),
        })
    })
    .await?;
    Ok(Json(reply))
}

async fn provenance(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    Ok(Json(with_session(&state, &id, |s| Ok(s.provenance())).await?))
}
