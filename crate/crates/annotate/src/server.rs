//! HTTP+JSON front end for an [`AnnotationStore`].
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{corpus_id, sample_size, seed, scorers}` | session info |
//! | GET | `/sessions/{id}` | | session info |
//! | GET | `/sessions/{id}/next` | | `{doc_id, title, body, progress}` or `{done: true}` |
//! | POST | `/sessions/{id}/ratings` | `{doc_id, value}` | `{progress}` |
//! | GET | `/sessions/{id}/report` | | per-scorer AUC list |
//!
//! Every error is `{"error": message}`. Anything else falls through to the
//! static UI directory when one is configured.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use newsrank::EvalError;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::session::{AnnotationError, AnnotationStore, Progress};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        use AnnotationError::*;
        let status = match &e {
            UnknownSession(_) => StatusCode::NOT_FOUND,
            UnknownCorpus(_) | UnknownScorer(_) | SampleTooLarge { .. } | Invalid(_) => StatusCode::BAD_REQUEST,
            NotCurrentTask | AlreadyRated(_) | SessionComplete | Incomplete(_) => StatusCode::CONFLICT,
            Eval(EvalError::AucUndefined(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            MissingDocument(_) | Scoring(_) | Eval(_) | CorruptLog { .. } | Io { .. } => {
                log::error!("{e}");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError {
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

type ApiResult = Result<Response, ApiError>;

/// Parses a JSON body ourselves so malformed requests still get the JSON
/// error shape rather than axum's plain-text rejection.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    corpus_id: String,
    sample_size: usize,
    seed: u64,
    scorers: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingRequest {
    doc_id: String,
    value: serde_json::Value,
}

async fn create(State(store): State<Arc<AnnotationStore>>, body: Bytes) -> ApiResult {
    let req: CreateRequest = parse_body(&body)?;
    let info = store.create_session(&req.corpus_id, req.sample_size, req.seed, &req.scorers)?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn info(State(store): State<Arc<AnnotationStore>>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(store.info(&id)?).into_response())
}

async fn next(State(store): State<Arc<AnnotationStore>>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(store.next_task(&id)?).into_response())
}

async fn rate(State(store): State<Arc<AnnotationStore>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: RatingRequest = parse_body(&body)?;
    let value = match req.value.as_u64() {
        Some(v @ (0 | 1)) => v as u8,
        _ => return Err(ApiError::bad_request(format!("rating must be 0 or 1, got {}", req.value))),
    };
    let progress: Progress = store.submit_rating(&id, &req.doc_id, value)?;
    Ok(Json(json!({ "progress": progress })).into_response())
}

async fn report(State(store): State<Arc<AnnotationStore>>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(store.report(&id)?).into_response())
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        message: "no such endpoint".into(),
    }
}

pub fn router(store: Arc<AnnotationStore>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(info))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/ratings", post(rate))
        .route("/sessions/{id}/report", get(report))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.fallback(not_found),
    }
}

/// Binds `addr`, reports the bound address (useful with port 0), and serves
/// until the process is stopped.
pub async fn serve(addr: SocketAddr, app: Router, on_ready: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    log::info!("annotation service listening on http://{bound}");
    on_ready(bound);
    axum::serve(listener, app).await
}
