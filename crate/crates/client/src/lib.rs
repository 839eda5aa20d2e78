//! Client for the session HTTP API.

use eventsource_stream::Eventsource;
use futures::stream::{BoxStream, StreamExt};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use copilot_core::orchestrator::SessionEvent;
use copilot_core::session::SessionMeta;

/// SSE event name the server uses for failures outside the event log.
pub const STREAM_ERROR_EVENT: &str = "stream_error";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{status}: {message}")]
    Api {
        status: StatusCode,
        code: String,
        message: String,
    },
    #[error("decoding {what}: {source}")]
    Decode {
        what: &'static str,
        source: serde_json::Error,
    },
    #[error("event stream: {0}")]
    Stream(String),
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            Self::Api { status, .. } => Some(*status),
            Self::Http(e) => e.status(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().await.unwrap_or_default();
    let (code, message) = match serde_json::from_str::<ApiError>(&body) {
        Ok(e) => (e.error, e.message),
        Err(_) => (status.as_str().to_string(), body),
    };
    Err(ClientError::Api {
        status,
        code,
        message,
    })
}

async fn json<T: DeserializeOwned>(
    resp: reqwest::Response,
    what: &'static str,
) -> Result<T, ClientError> {
    let bytes = check(resp).await?.bytes().await?;
    serde_json::from_slice(&bytes).map_err(|source| ClientError::Decode { what, source })
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn create_session(&self) -> Result<SessionMeta, ClientError> {
        json(
            self.http.post(self.url("/sessions")).send().await?,
            "session",
        )
        .await
    }

    pub async fn list_sessions(&self) -> Result<Vec<SessionMeta>, ClientError> {
        json(
            self.http.get(self.url("/sessions")).send().await?,
            "session list",
        )
        .await
    }

    /// Events with seq greater than `after`, or all of them.
    pub async fn history(
        &self,
        id: &str,
        after: Option<u64>,
    ) -> Result<Vec<SessionEvent>, ClientError> {
        let path = match after {
            Some(a) => format!("/sessions/{id}/history?after={a}"),
            None => format!("/sessions/{id}/history"),
        };
        json(self.http.get(self.url(&path)).send().await?, "history").await
    }

    pub async fn artifact(&self, name: &str) -> Result<Vec<u8>, ClientError> {
        let resp = self
            .http
            .get(self.url(&format!("/artifacts/{name}")))
            .send()
            .await?;
        Ok(check(resp).await?.bytes().await?.to_vec())
    }

    /// Posts a user message and streams the turn's events as they are
    /// persisted. Rejections such as a conflict surface here, before any
    /// event.
    pub async fn post_message(
        &self,
        id: &str,
        text: &str,
    ) -> Result<BoxStream<'static, Result<SessionEvent, ClientError>>, ClientError> {
        let resp = self
            .http
            .post(self.url(&format!("/sessions/{id}/messages")))
            .json(&serde_json::json!({ "text": text }))
            .send()
            .await?;
        let events = check(resp).await?.bytes_stream().eventsource().map(|item| {
            let ev = item.map_err(|e| ClientError::Stream(e.to_string()))?;
            if ev.event == STREAM_ERROR_EVENT {
                let e: ApiError =
                    serde_json::from_str(&ev.data).map_err(|source| ClientError::Decode {
                        what: "stream error",
                        source,
                    })?;
                return Err(ClientError::Stream(e.message));
            }
            serde_json::from_str(&ev.data).map_err(|source| ClientError::Decode {
                what: "event",
                source,
            })
        });
        Ok(events.boxed())
    }
}
