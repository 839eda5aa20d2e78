use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::StreamExt;
use reqwest::StatusCode;

use copilot_client::{Client, ClientError};
use copilot_core::orchestrator::{EventBody, SessionEvent};
use copilot_server::{router, ProviderChoice, SandboxChoice, Settings};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn settings(dir: &Path) -> Settings {
    Settings {
        session_dir: dir.join("sessions"),
        artifact_dir: dir.join("artifacts"),
        lake_path: Some(root().join("fixtures/lake")),
        corpus_path: Some(root().join("fixtures/corpus/documents.json")),
        provider: ProviderChoice::Scripted(root().join("fixtures/scripts/case1.jsonl")),
        sandbox: SandboxChoice::Stub,
        budget: None,
    }
}

/// Starts a server on an ephemeral port; dropping the sender stops it.
async fn serve(
    settings: Settings,
) -> (
    Client,
    tokio::sync::oneshot::Sender<()>,
    tokio::task::JoinHandle<()>,
) {
    let service = tokio::task::spawn_blocking(move || settings.build())
        .await
        .unwrap()
        .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, router(Arc::new(service)))
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
            .unwrap();
    });
    (Client::new(format!("http://{addr}")), tx, task)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn case1_over_http_matches_golden_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (client, stop, task) = serve(settings(dir.path())).await;
    let id = client.create_session().await.unwrap().session_id;
    let mut stream = client
        .post_message(&id, "Draw the collaboration network of Harvard University.")
        .await
        .unwrap();
    let mut streamed: Vec<SessionEvent> = Vec::new();
    while let Some(e) = stream.next().await {
        streamed.push(e.unwrap());
    }
    let golden: Vec<String> = serde_json::from_str(
        &std::fs::read_to_string(root().join("fixtures/golden/case1_event_kinds.json")).unwrap(),
    )
    .unwrap();
    let kinds: Vec<&str> = streamed.iter().map(|e| e.kind().as_str()).collect();
    assert_eq!(kinds, golden);
    let history = client.history(&id, None).await.unwrap();
    assert_eq!(history, streamed);
    assert_eq!(client.history(&id, Some(10)).await.unwrap(), streamed[11..]);

    let figures: Vec<String> = streamed
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::FigureStandin { stand_in, .. } => Some(stand_in.reference.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(figures.len(), 2);
    for name in &figures {
        assert!(!client.artifact(name).await.unwrap().is_empty());
    }
    stop.send(()).unwrap();
    task.await.unwrap();

    let (client, stop, task) = serve(settings(dir.path())).await;
    assert_eq!(client.history(&id, None).await.unwrap(), history);
    let sessions = client.list_sessions().await.unwrap();
    assert_eq!(sessions.len(), 1);
    assert_eq!(sessions[0].event_count, history.len() as u64);
    stop.send(()).unwrap();
    task.await.unwrap();
}

#[tokio::test]
async fn api_errors_carry_status_and_code() {
    let dir = tempfile::tempdir().unwrap();
    let (client, stop, _task) = serve(settings(dir.path())).await;
    match client.history("unknown", None).await {
        Err(e @ ClientError::Api { .. }) => assert_eq!(e.status(), Some(StatusCode::NOT_FOUND)),
        other => panic!("expected a 404, got {other:?}"),
    }
    let err = client.post_message("unknown", "hi").await.err().unwrap();
    assert_eq!(err.status(), Some(StatusCode::NOT_FOUND));
    let err = client.artifact("none.png").await.err().unwrap();
    assert_eq!(err.status(), Some(StatusCode::NOT_FOUND));
    drop(stop);
}
