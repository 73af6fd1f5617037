//! HTTP query service.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use finrag_core::vecstore::VectorStoreError;
use finrag_core::{Mode, RagError, RagPipeline};
use serde::Deserialize;
use serde_json::json;

pub struct AppState {
    pub pipeline: RagPipeline,
    pub default_k: usize,
}

#[derive(Debug, Deserialize)]
struct QueryRequest {
    question: String,
    #[serde(default)]
    mode: Option<Mode>,
    #[serde(default)]
    k: Option<usize>,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn status_for(err: &RagError) -> StatusCode {
    match err {
        RagError::EmptyQuestion | RagError::Store(VectorStoreError::InvalidK) => {
            StatusCode::BAD_REQUEST
        }
        RagError::Embed(_) | RagError::Llm(_) => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let index = state.pipeline.corpus().index();
    Json(json!({ "status": "ok", "index_count": index.len(), "dim": index.dim() }))
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let mode = req.mode.unwrap_or(Mode::Rag);
    let k = req.k.unwrap_or(state.default_k);
    let result =
        tokio::task::spawn_blocking(move || state.pipeline.answer_query(&req.question, mode, k))
            .await;
    match result {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e)) => {
            let status = status_for(&e);
            if status.is_server_error() {
                tracing::warn!(error = %e, "query failed");
            }
            error(status, e)
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/query", post(query))
        .with_state(state)
}
