//! HTTP API over [`SessionService`].
//!
//! Turns run on the blocking pool. Their events are forwarded as server-sent
//! events after the service has written them to disk.

mod settings;

use std::convert::Infallible;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tokio_stream::wrappers::UnboundedReceiverStream;

use copilot_core::orchestrator::{SessionEvent, TurnOutcome};
use copilot_core::session::{SessionError, SessionService};

pub use settings::{BootError, ProviderChoice, SandboxChoice, Settings};

/// SSE event name for a failure that is not itself a session event.
pub const STREAM_ERROR_EVENT: &str = "stream_error";

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<SessionService>,
}

pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/history", get(history))
        .route("/artifacts/{name}", get(artifact))
        .with_state(AppState { service })
}

/// JSON error body.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

struct HttpError(StatusCode, ApiError);

impl HttpError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self(
            status,
            ApiError {
                error: code.into(),
                message: message.into(),
            },
        )
    }
}

impl From<SessionError> for HttpError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            SessionError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            SessionError::EmptyMessage => (StatusCode::BAD_REQUEST, "empty_message"),
            SessionError::Corrupt { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_log"),
            SessionError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            SessionError::Orchestrator(_) => (StatusCode::INTERNAL_SERVER_ERROR, "orchestrator"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

/// Runs blocking service work off the async runtime.
async fn blocking<T, F>(f: F) -> Result<T, HttpError>
where
    F: FnOnce() -> Result<T, SessionError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| HttpError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(HttpError::from)
}

async fn create_session(State(s): State<AppState>) -> Result<impl IntoResponse, HttpError> {
    let meta = blocking(move || s.service.create_session()).await?;
    Ok((StatusCode::CREATED, Json(meta)))
}

async fn list_sessions(State(s): State<AppState>) -> Result<impl IntoResponse, HttpError> {
    Ok(Json(blocking(move || s.service.list_sessions()).await?))
}

#[derive(Debug, Deserialize)]
struct HistoryQuery {
    after: Option<u64>,
}

async fn history(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HistoryQuery>,
) -> Result<impl IntoResponse, HttpError> {
    Ok(Json(
        blocking(move || s.service.history(&id, q.after)).await?,
    ))
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
}

enum TurnMsg {
    Event(SessionEvent),
    Done(Result<TurnOutcome, SessionError>),
}

fn sse_event(msg: TurnMsg) -> Option<Event> {
    match msg {
        TurnMsg::Event(e) => Some(
            Event::default()
                .event(e.kind().as_str())
                .id(e.seq.to_string())
                .data(serde_json::to_string(&e).expect("events serialize")),
        ),
        TurnMsg::Done(Ok(_)) => None,
        TurnMsg::Done(Err(e)) => {
            let body = ApiError {
                error: "turn_aborted".into(),
                message: e.to_string(),
            };
            Some(
                Event::default()
                    .event(STREAM_ERROR_EVENT)
                    .data(serde_json::to_string(&body).expect("errors serialize")),
            )
        }
    }
}

async fn post_message(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<MessageBody>>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, HttpError> {
    let text = body.map(|Json(b)| b.text).unwrap_or_default();
    let (tx, mut rx) = mpsc::unbounded_channel();
    let service = Arc::clone(&s.service);
    tokio::task::spawn_blocking(move || {
        let events = tx.clone();
        // The turn finishes and is persisted even if the client goes away.
        let r = service.post_user_message(&id, &text, &mut |e| {
            let _ = events.send(TurnMsg::Event(e.clone()));
        });
        let _ = tx.send(TurnMsg::Done(r));
    });
    let first = rx.recv().await.ok_or_else(|| {
        HttpError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "turn task ended",
        )
    })?;
    if let TurnMsg::Done(Err(e)) = first {
        return Err(e.into());
    }
    let rest = UnboundedReceiverStream::new(rx);
    let stream = stream::once(async { first })
        .chain(rest)
        .filter_map(|m| async { sse_event(m).map(Ok) });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

/// A bare file name inside the artifact directory.
fn artifact_path(dir: &Path, name: &str) -> Option<PathBuf> {
    let mut parts = Path::new(name).components();
    match (parts.next(), parts.next()) {
        (Some(Component::Normal(_)), None) => Some(dir.join(name)),
        _ => None,
    }
}

async fn artifact(
    State(s): State<AppState>,
    UrlPath(name): UrlPath<String>,
) -> Result<Response, HttpError> {
    let not_found = || {
        HttpError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no artifact `{name}`"),
        )
    };
    let path = artifact_path(&s.service.config().artifact_dir, &name).ok_or_else(not_found)?;
    let bytes = match tokio::fs::read(&path).await {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(not_found()),
        Err(e) if e.kind() == std::io::ErrorKind::IsADirectory => return Err(not_found()),
        Err(e) => {
            return Err(HttpError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "storage",
                e.to_string(),
            ))
        }
    };
    let mime = mime_guess::from_path(&path).first_or_octet_stream();
    Ok(([(header::CONTENT_TYPE, mime.to_string())], bytes).into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_names_cannot_leave_the_directory() {
        let dir = Path::new("/data/artifacts");
        assert_eq!(artifact_path(dir, "fig.png"), Some(dir.join("fig.png")));
        assert_eq!(artifact_path(dir, "../secret"), None);
        assert_eq!(artifact_path(dir, "a/b.png"), None);
        assert_eq!(artifact_path(dir, "/etc/passwd"), None);
        assert_eq!(artifact_path(dir, ".."), None);
        assert_eq!(artifact_path(dir, ""), None);
    }
}
