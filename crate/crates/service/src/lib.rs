//! Annotation task service.
//!
//! Sampled triples are handed out as tasks, one per entity, to annotators
//! who identify themselves with a bearer token. Submitted labels drive an
//! orchestrator session until its stopping rule holds.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/graphs` | names of the loaded graphs |
//! | POST | `/sessions` | start a session, 201 |
//! | GET | `/sessions/{id}/tasks/next` | lease the next task, 204 when none is open |
//! | GET | `/sessions/{id}/estimate` | current estimate, cost and progress |
//! | GET | `/tasks/{id}` | a task and its labels, if any |
//! | POST | `/tasks/{id}/labels` | `{"labels": [..]}`, one per item in order |

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::Router;

pub mod api;
pub mod board;
pub mod clock;

pub use board::{Board, BoardError, NewSession, DEFAULT_LEASE};
pub use clock::{Clock, ManualClock, SystemClock};

#[derive(Clone)]
pub struct AppState {
    pub board: Arc<Mutex<Board>>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(board: Board, clock: Arc<dyn Clock>) -> Self {
        AppState { board: Arc::new(Mutex::new(board)), clock }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/graphs", get(api::graphs))
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}/tasks/next", get(api::next_task))
        .route("/sessions/{id}/estimate", get(api::estimate))
        .route("/tasks/{id}", get(api::task))
        .route("/tasks/{id}/labels", post(api::submit))
        .with_state(state)
}

/// Serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/service.md")]
mod book {}
