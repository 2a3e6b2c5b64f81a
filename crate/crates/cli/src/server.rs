//! HTTP API over advisor sessions.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::CorsLayer;
use uuid::Uuid;

use qskat_core::oracle::{OracleError, Scenario};
use qskat_core::Card;

use crate::session::{Session, SessionMode, SessionView, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("no session {0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl From<OracleError> for ApiError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NotToMove { .. }
            | OracleError::CardNotHeld { .. }
            | OracleError::IllegalMove { .. }
            | OracleError::GameOver
            | OracleError::NoConsistentDeal => ApiError::Unprocessable(e.to_string()),
            OracleError::BadScenario(_) | OracleError::Encoding(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<Mutex<Session>>;

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<Uuid, Shared>>,
    state_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(state_dir: Option<PathBuf>) -> Self {
        AppState {
            sessions: RwLock::default(),
            state_dir,
        }
    }

    /// Reloads every snapshot in the state directory.
    pub async fn load(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.state_dir else {
            return Ok(0);
        };
        std::fs::create_dir_all(dir)?;
        let mut loaded = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let Ok(snap) = serde_json::from_str::<Snapshot>(&text) else {
                eprintln!("skipping unreadable snapshot {}", path.display());
                continue;
            };
            match Session::restore(snap) {
                Ok(s) => {
                    self.sessions.write().await.insert(s.id, Arc::new(Mutex::new(s)));
                    loaded += 1;
                }
                Err(e) => eprintln!("skipping snapshot {}: {e}", path.display()),
            }
        }
        Ok(loaded)
    }

    fn persist(&self, session: &Session) -> Result<(), ApiError> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let text = serde_json::to_string_pretty(&session.snapshot()).map_err(|e| ApiError::Internal(e.to_string()))?;
        std::fs::create_dir_all(dir).map_err(|e| ApiError::Internal(e.to_string()))?;
        std::fs::write(dir.join(format!("{}.json", session.id)), text).map_err(|e| ApiError::Internal(e.to_string()))
    }

    fn forget(&self, id: Uuid) {
        if let Some(dir) = &self.state_dir {
            let _ = std::fs::remove_file(dir.join(format!("{id}.json")));
        }
    }

    async fn get(&self, id: &str) -> Result<Shared, ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::NotFound(id.to_string()))?;
        self.sessions
            .read()
            .await
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}", get(fetch).delete(remove))
        .route("/api/sessions/{id}/play", post(play))
        .route("/api/sessions/{id}/whatif", post(what_if))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Deserialize)]
struct CreateBody {
    scenario: Scenario,
    #[serde(default)]
    mode: SessionMode,
}

#[derive(Deserialize)]
struct PlayBody {
    seat: usize,
    card: String,
}

#[derive(Deserialize)]
struct WhatIfBody {
    card: String,
    seat: Option<usize>,
}

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes, status: fn(String) -> ApiError) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| status(e.to_string()))
}

fn parse_card(s: &str) -> Result<Card, ApiError> {
    s.parse()
        .map_err(|e: qskat_core::encoding::EncodingError| ApiError::Unprocessable(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn create(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let body: CreateBody = parse(&body, ApiError::BadRequest)?;
    let (session, view) = blocking(move || {
        let session = Session::new(body.scenario, body.mode)?;
        let view = session.view()?;
        Ok((session, view))
    })
    .await?;
    app.persist(&session)?;
    app.sessions
        .write()
        .await
        .insert(session.id, Arc::new(Mutex::new(session)));
    Ok(Json(view))
}

async fn fetch(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let shared = app.get(&id).await?;
    let session = shared.lock().await;
    let copy = session.clone();
    Ok(Json(blocking(move || Ok(copy.view()?)).await?))
}

async fn remove(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let shared = app.get(&id).await?;
    let id = shared.lock().await.id;
    app.sessions.write().await.remove(&id);
    app.forget(id);
    Ok(StatusCode::NO_CONTENT)
}

async fn play(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let body: PlayBody = parse(&body, ApiError::Unprocessable)?;
    let card = parse_card(&body.card)?;
    let shared = app.get(&id).await?;
    let mut session = shared.lock().await;
    let mut next = session.clone();
    let (next, view) = blocking(move || {
        next.play(body.seat, card)?;
        let view = next.view()?;
        Ok((next, view))
    })
    .await?;
    app.persist(&next)?;
    *session = next;
    Ok(Json(view))
}

async fn what_if(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let body: WhatIfBody = parse(&body, ApiError::Unprocessable)?;
    let card = parse_card(&body.card)?;
    let shared = app.get(&id).await?;
    let session = shared.lock().await;
    let copy = session.clone();
    let view = blocking(move || {
        let seat = match body.seat {
            Some(s) => s,
            None => copy.advisor.to_move().ok_or(OracleError::GameOver)?,
        };
        Ok(copy.what_if(seat, card)?)
    })
    .await?;
    Ok(Json(view))
}

pub async fn serve(port: u16, state_dir: Option<PathBuf>) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(state_dir));
    let restored = state.load().await?;
    if restored > 0 {
        eprintln!("restored {restored} sessions");
    }
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
