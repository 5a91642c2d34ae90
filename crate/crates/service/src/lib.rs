//! HTTP advisor: hosts live assisted sessions over JSON.
//!
//! Every response carries `"version"`. Requests may carry one too; a
//! mismatch is rejected.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use aiad_core::session::{AnySession, SessionConfig, SessionView};
use aiad_core::Error;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

pub const API_VERSION: &str = "1";

type Shared = Arc<Mutex<AnySession>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<Uuid, Shared>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session table poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        let id = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(&id.to_string()))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::IllegalAction(_) => (StatusCode::CONFLICT, "illegal_action"),
            Error::InvalidArgument(_) | Error::Spec(_) | Error::Json(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "version": API_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub version: Option<String>,
    #[serde(flatten)]
    pub config: SessionConfig,
}

#[derive(Debug, Deserialize)]
pub struct ActionRequest {
    #[serde(default)]
    pub version: Option<String>,
    pub action: Value,
}

#[derive(Debug, Serialize)]
pub struct SessionResponse {
    pub version: &'static str,
    pub id: Uuid,
    pub session: SessionView,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<SessionConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<Value>,
}

#[derive(Debug, Serialize)]
pub struct AdviceResponse {
    pub version: &'static str,
    pub id: Uuid,
    pub step: usize,
    /// `null` once the episode has ended.
    pub advice: Option<Value>,
}

#[derive(Debug, Serialize)]
pub struct ActionResponse {
    pub version: &'static str,
    pub id: Uuid,
    pub record: Value,
    pub session: SessionView,
}

fn check_version(v: &Option<String>) -> Result<(), ApiError> {
    match v {
        Some(v) if v != API_VERSION => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "unsupported_version",
            format!("version {v} is not supported; this server speaks {API_VERSION}"),
        )),
        _ => Ok(()),
    }
}

/// Runs session work off the async executor; planning is CPU-bound.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn lock(s: &Shared) -> std::sync::MutexGuard<'_, AnySession> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

async fn create(
    State(state): State<AppState>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionResponse>), ApiError> {
    let Json(req) = body?;
    check_version(&req.version)?;
    let config = req.config;
    let (session, view, instance) = blocking({
        let config = config.clone();
        move || {
            let s = AnySession::create(&config)?;
            let view = s.view()?;
            let instance = s.instance()?;
            Ok((s, view, instance))
        }
    })
    .await?;
    let id = Uuid::new_v4();
    state
        .sessions
        .lock()
        .expect("session table poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    log::info!("created {:?} session {id}", config.domain);
    Ok((
        StatusCode::CREATED,
        Json(SessionResponse {
            version: API_VERSION,
            id,
            session: view,
            config: Some(config),
            instance: Some(instance),
        }),
    ))
}

async fn show(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionResponse>, ApiError> {
    let shared = state.get(&id)?;
    let view = blocking(move || Ok(lock(&shared).view()?)).await?;
    Ok(Json(SessionResponse {
        version: API_VERSION,
        id: Uuid::parse_str(&id).expect("validated by lookup"),
        session: view,
        config: None,
        instance: None,
    }))
}

async fn advice(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<AdviceResponse>, ApiError> {
    let shared = state.get(&id)?;
    let (step, advice) = blocking(move || {
        let mut s = lock(&shared);
        let advice = s.advice()?;
        Ok((s.view()?.step, advice))
    })
    .await?;
    Ok(Json(AdviceResponse {
        version: API_VERSION,
        id: Uuid::parse_str(&id).expect("validated by lookup"),
        step,
        advice,
    }))
}

async fn act(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> Result<Json<ActionResponse>, ApiError> {
    let Json(req) = body?;
    check_version(&req.version)?;
    let shared = state.get(&id)?;
    let (record, view) = blocking(move || {
        let mut s = lock(&shared);
        let record = s.act(req.action)?;
        Ok((record, s.view()?))
    })
    .await?;
    Ok(Json(ActionResponse {
        version: API_VERSION,
        id: Uuid::parse_str(&id).expect("validated by lookup"),
        record,
        session: view,
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/advice", get(advice))
        .route("/sessions/{id}/actions", post(act))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("advisor listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new())).await
}
