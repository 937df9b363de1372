use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use kgacc::orchestrator::SessionError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::board::{BoardError, Created, EstimateView, NewSession, SubmitOutcome, TaskView};
use crate::AppState;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Labels {
    pub labels: Vec<bool>,
}

#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    Board(BoardError),
}

impl From<BoardError> for ApiError {
    fn from(e: BoardError) -> Self {
        ApiError::Board(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::Unauthorized => {
                (StatusCode::UNAUTHORIZED, "an `Authorization: Bearer <token>` header is required".to_string())
            }
            ApiError::Board(e) => {
                let status = match &e {
                    BoardError::UnknownSession(_) | BoardError::UnknownTask(_) | BoardError::UnknownGraph(_) => {
                        StatusCode::NOT_FOUND
                    }
                    BoardError::Invalid(_) | BoardError::Incomplete { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                    BoardError::Session(SessionError::Config(_) | SessionError::Unrequested(_)) => {
                        StatusCode::UNPROCESSABLE_ENTITY
                    }
                    BoardError::LeaseExpired(_) | BoardError::LeasedElsewhere(_) | BoardError::NotLeased(_) => {
                        StatusCode::CONFLICT
                    }
                    BoardError::Session(_) => StatusCode::INTERNAL_SERVER_ERROR,
                };
                if status.is_server_error() {
                    tracing::error!(error = %e, "request failed");
                }
                (status, e.to_string())
            }
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .ok_or(ApiError::Unauthorized)
}

pub async fn graphs(State(st): State<AppState>) -> Json<Vec<String>> {
    Json(st.board.lock().unwrap().graph_names())
}

pub async fn create_session(
    State(st): State<AppState>,
    Json(req): Json<NewSession>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let created = st.board.lock().unwrap().create(&req)?;
    tracing::info!(session = %created.session_id, graph = %req.graph, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

pub async fn next_task(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let who = bearer(&headers)?;
    let now = st.clock.now();
    match st.board.lock().unwrap().next_task(&id, &who, now)? {
        Some(t) => Ok(Json(t).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

pub async fn submit(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<Labels>,
) -> Result<Json<SubmitOutcome>, ApiError> {
    let who = bearer(&headers)?;
    let now = st.clock.now();
    Ok(Json(st.board.lock().unwrap().submit(&id, &who, &body.labels, now)?))
}

pub async fn task(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<TaskView>, ApiError> {
    Ok(Json(st.board.lock().unwrap().task(&id)?))
}

pub async fn estimate(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<EstimateView>, ApiError> {
    let now = st.clock.now();
    Ok(Json(st.board.lock().unwrap().estimate(&id, now)?))
}
