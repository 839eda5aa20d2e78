use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use tracing_subscriber::EnvFilter;

use copilot_server::{router, ProviderChoice, SandboxChoice, Settings};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Provider {
    Scripted,
    Live,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sandbox {
    Stub,
    Process,
}

/// Serves research copilot sessions over HTTP.
#[derive(Debug, Parser)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "SESSION_DIR", default_value = "sessions")]
    session_dir: PathBuf,
    #[arg(long, env = "ARTIFACT_DIR", default_value = "artifacts")]
    artifact_dir: PathBuf,
    #[arg(long, env = "DATA_LAKE_PATH")]
    lake: Option<PathBuf>,
    #[arg(long, env = "CORPUS_PATH")]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "live")]
    provider: Provider,
    /// Script for the scripted provider, one JSON object per line.
    #[arg(long, required_if_eq("provider", "scripted"))]
    script: Option<PathBuf>,
    /// Defaults to the stub interpreter for scripted runs.
    #[arg(long, value_enum)]
    sandbox: Option<Sandbox>,
    #[arg(long)]
    budget: Option<u32>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .init();
    let args = Args::parse();
    let provider = match args.provider {
        Provider::Scripted => {
            ProviderChoice::Scripted(args.script.clone().expect("clap requires --script"))
        }
        Provider::Live => ProviderChoice::Live,
    };
    let sandbox = match (args.sandbox, &provider) {
        (Some(Sandbox::Process), _) | (None, ProviderChoice::Live) => SandboxChoice::Process,
        _ => SandboxChoice::Stub,
    };
    let settings = Settings {
        session_dir: args.session_dir,
        artifact_dir: args.artifact_dir,
        lake_path: args.lake,
        corpus_path: args.corpus,
        provider,
        sandbox,
        budget: args.budget,
    };
    let service = tokio::task::spawn_blocking(move || settings.build())
        .await?
        .context("starting session service")?;
    let listener = tokio::net::TcpListener::bind(args.bind)
        .await
        .with_context(|| format!("binding {}", args.bind))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(service)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
