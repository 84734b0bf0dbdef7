//! JSON-over-HTTP session service.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flightpref::game::{ActionResult, CreateSession, GameError, GameState, Session, SessionStore, UtteranceResponse};
use flightpref::pragmatics::{PosteriorSnapshot, Pragmatics};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

pub type Store = Arc<SessionStore>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<GameError> for ApiError {
    fn from(e: GameError) -> Self {
        let status = match &e {
            GameError::UnknownSession(_) => StatusCode::NOT_FOUND,
            GameError::EmptyUtterance | GameError::Policy(_) => StatusCode::BAD_REQUEST,
            GameError::WrongPhase { .. } | GameError::SessionExists(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Runs blocking session work off the async executor.
async fn with_session<T, F>(store: Store, id: String, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session, &Pragmatics) -> Result<T, GameError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || store.with_session(&id, f))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

async fn create_session(State(store): State<Store>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateSession = parse_body(&body)?;
    let id = tokio::task::spawn_blocking(move || store.create(&req))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })??;
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    User,
    Assistant,
}

#[derive(Debug, Default, Deserialize)]
struct StateQuery {
    #[serde(default)]
    role: Role,
}

/// Game state as JSON; the assistant's view omits the hidden reward.
pub fn state_view(state: &GameState, role: Role) -> serde_json::Value {
    let mut v = serde_json::to_value(state).expect("state serializes");
    if role == Role::Assistant {
        if let Some(obj) = v.as_object_mut() {
            obj.remove("theta_star");
        }
    }
    v
}

async fn get_state(
    State(store): State<Store>,
    Path(id): Path<String>,
    Query(q): Query<StateQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let state = with_session(store, id, |s, _| Ok(s.state().clone())).await?;
    Ok(Json(state_view(&state, q.role)))
}

#[derive(Debug, Default, Deserialize)]
struct UtteranceRequest {
    #[serde(default)]
    text: String,
}

async fn post_utterance(
    State(store): State<Store>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<UtteranceResponse>> {
    let req: UtteranceRequest = parse_body(&body)?;
    let resp = with_session(store, id, move |s, engine| s.submit_utterance(&req.text, engine)).await?;
    Ok(Json(resp))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionResponse {
    #[serde(flatten)]
    pub result: ActionResult,
    pub posterior: PosteriorSnapshot,
}

async fn post_assistant_action(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Json<ActionResponse>> {
    let resp = with_session(store, id, |s, _| {
        let result = s.assistant_action()?;
        Ok(ActionResponse {
            result,
            posterior: s.state().posterior.clone(),
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn get_posterior(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Json<PosteriorSnapshot>> {
    let p = with_session(store, id, |s, _| Ok(s.state().posterior.clone())).await?;
    Ok(Json(p))
}

pub fn router(store: Store, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/state", get(get_state))
        .route("/session/{id}/utterance", post(post_utterance))
        .route("/session/{id}/assistant_action", post(post_assistant_action))
        .route("/session/{id}/posterior", get(get_posterior))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(store: Store, static_dir: Option<PathBuf>, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
