use std::path::Path;
use std::sync::{mpsc, Arc};
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use parking_lot::Mutex;
use tower::ServiceExt;

use copilot_core::llm::{
    ChatMessage, ChatProvider, GenerationParams, ProviderError, ProviderResponse, Script,
    ScriptEntry,
};
use copilot_core::orchestrator::{Limits, SessionEvent};
use copilot_core::session::{
    ProviderSource, ServiceConfig, SessionMeta, SessionService, SessionStatus, SessionStore,
};
use copilot_core::toolkit::{StubBackend, ToolDescriptor, ToolRegistry};
use copilot_server::{router, ApiError};

fn service(dir: &Path, provider: ProviderSource) -> Arc<SessionService> {
    Arc::new(SessionService::new(
        SessionStore::open(dir.join("sessions")).unwrap(),
        ServiceConfig {
            provider,
            tools: Arc::new(ToolRegistry::new()),
            artifact_dir: dir.join("artifacts"),
            sandbox_backend: Arc::new(StubBackend),
            limits: Limits::default(),
        },
    ))
}

fn answering(dir: &Path) -> Arc<SessionService> {
    let script = Script::new(vec![ScriptEntry::text("<answer>42</answer>")]);
    service(dir, ProviderSource::Scripted(Arc::new(script)))
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<&str>,
) -> (StatusCode, Vec<u8>, Option<String>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_default())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    (
        status,
        to_bytes(resp.into_body(), usize::MAX)
            .await
            .unwrap()
            .to_vec(),
        ctype,
    )
}

async fn create(app: &Router) -> SessionMeta {
    let (status, body, _) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    serde_json::from_slice(&body).unwrap()
}

fn error_code(body: &[u8]) -> String {
    serde_json::from_slice::<ApiError>(body).unwrap().error
}

#[tokio::test]
async fn sessions_are_created_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(answering(dir.path()));
    let a = create(&app).await;
    let b = create(&app).await;
    assert_ne!(a.session_id, b.session_id);
    assert_eq!(a.status, SessionStatus::Idle);
    let (status, body, _) = call(&app, Method::GET, "/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        serde_json::from_slice::<Vec<SessionMeta>>(&body)
            .unwrap()
            .len(),
        2
    );
}

#[tokio::test]
async fn a_message_streams_persisted_events() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(answering(dir.path()));
    let id = create(&app).await.session_id;
    let (status, body, ctype) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/messages"),
        Some(r#"{"text":"six times seven?"}"#),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(ctype.unwrap().starts_with("text/event-stream"));
    let text = String::from_utf8(body).unwrap();
    let streamed: Vec<SessionEvent> = text
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect();
    let names: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("event: "))
        .collect();
    assert_eq!(names, ["user_message", "agent_message", "final_answer"]);

    let (status, body, _) = call(&app, Method::GET, &format!("/sessions/{id}/history"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        serde_json::from_slice::<Vec<SessionEvent>>(&body).unwrap(),
        streamed
    );
    let (_, body, _) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/history?after=0"),
        None,
    )
    .await;
    assert_eq!(
        serde_json::from_slice::<Vec<SessionEvent>>(&body).unwrap(),
        streamed[1..]
    );
}

#[tokio::test]
async fn rejections_have_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(answering(dir.path()));
    let id = create(&app).await.session_id;

    let (status, body, _) = call(&app, Method::GET, "/sessions/missing/history", None).await;
    assert_eq!(
        (status, error_code(&body).as_str()),
        (StatusCode::NOT_FOUND, "not_found")
    );
    let (status, _, _) = call(
        &app,
        Method::POST,
        "/sessions/missing/messages",
        Some(r#"{"text":"hi"}"#),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let uri = format!("/sessions/{id}/messages");
    let (status, body, _) = call(&app, Method::POST, &uri, Some(r#"{"text":"   "}"#)).await;
    assert_eq!(
        (status, error_code(&body).as_str()),
        (StatusCode::BAD_REQUEST, "empty_message")
    );
    let (status, _, _) = call(&app, Method::POST, &uri, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/history?after=x"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn artifacts_are_served_read_only() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(answering(dir.path()));
    let artifacts = dir.path().join("artifacts");
    std::fs::create_dir_all(&artifacts).unwrap();
    std::fs::write(artifacts.join("fig.png"), b"\x89PNG fake").unwrap();
    std::fs::write(dir.path().join("secret.txt"), b"hidden").unwrap();

    let (status, body, ctype) = call(&app, Method::GET, "/artifacts/fig.png", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"\x89PNG fake");
    assert_eq!(ctype.as_deref(), Some("image/png"));
    for uri in [
        "/artifacts/missing.png",
        "/artifacts/..%2Fsecret.txt",
        "/artifacts/..",
        "/artifacts/%2Fetc%2Fpasswd",
    ] {
        assert_eq!(
            call(&app, Method::GET, uri, None).await.0,
            StatusCode::NOT_FOUND,
            "{uri}"
        );
    }
    let (status, _, _) = call(&app, Method::PUT, "/artifacts/fig.png", Some("{}")).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    let (status, _, _) = call(&app, Method::DELETE, "/artifacts/fig.png", None).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
}

/// Blocks its first call until released.
struct Held {
    entered: Mutex<Option<mpsc::Sender<()>>>,
    release: Mutex<mpsc::Receiver<()>>,
}

impl ChatProvider for Held {
    fn complete(
        &self,
        _: &[ChatMessage],
        _: &[ToolDescriptor],
        _: &GenerationParams,
    ) -> Result<ProviderResponse, ProviderError> {
        if let Some(tx) = self.entered.lock().take() {
            tx.send(()).unwrap();
            self.release
                .lock()
                .recv_timeout(Duration::from_secs(10))
                .unwrap();
        }
        Ok(ProviderResponse {
            text: "<answer>done</answer>".into(),
            tool_calls: vec![],
        })
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_post_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let (entered_tx, entered_rx) = mpsc::channel();
    let (release_tx, release_rx) = mpsc::channel();
    let provider = Arc::new(Held {
        entered: Mutex::new(Some(entered_tx)),
        release: Mutex::new(release_rx),
    });
    let app = router(service(dir.path(), ProviderSource::Shared(provider)));
    let id = create(&app).await.session_id;
    let uri = format!("/sessions/{id}/messages");

    let first = {
        let (app, uri) = (app.clone(), uri.clone());
        tokio::spawn(async move { call(&app, Method::POST, &uri, Some(r#"{"text":"one"}"#)).await })
    };
    tokio::task::spawn_blocking(move || entered_rx.recv_timeout(Duration::from_secs(10)).unwrap())
        .await
        .unwrap();
    let (status, body, _) = call(&app, Method::POST, &uri, Some(r#"{"text":"two"}"#)).await;
    assert_eq!(
        (status, error_code(&body).as_str()),
        (StatusCode::CONFLICT, "conflict")
    );
    let (_, body, _) = call(&app, Method::GET, &format!("/sessions/{id}/history"), None).await;
    assert_eq!(
        serde_json::from_slice::<Vec<SessionEvent>>(&body)
            .unwrap()
            .len(),
        1
    );

    release_tx.send(()).unwrap();
    let (status, body, _) = first.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body)
        .unwrap()
        .contains("event: final_answer"));
}
