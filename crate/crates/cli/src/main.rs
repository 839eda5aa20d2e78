use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use futures::StreamExt;

use copilot_client::Client;
use copilot_core::orchestrator::SessionState;
use copilot_server::{router, ProviderChoice, SandboxChoice, Settings};

mod render;

/// Research copilot terminal client.
#[derive(Debug, Parser)]
#[command(name = "copilot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chat with the research manager, one message per input line.
    Chat(ChatArgs),
    /// Print a stored session and check that it replays.
    Replay {
        session_id: String,
        #[command(flatten)]
        target: Target,
    },
    /// Fixture-based checks.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
}

#[derive(Debug, Subcommand)]
enum FixturesCommand {
    /// Runs the acceptance checks and prints one line per criterion.
    Verify {
        /// Repository root holding `fixtures/`.
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Provider {
    Scripted,
    Live,
}

#[derive(Debug, Args)]
struct Target {
    /// Server to talk to. Without it an in-process server is started over
    /// SESSION_DIR and ARTIFACT_DIR.
    #[arg(long, env = "COPILOT_SERVER")]
    server: Option<String>,
    #[arg(long, env = "SESSION_DIR", default_value = ".copilot/sessions")]
    session_dir: PathBuf,
    #[arg(long, env = "ARTIFACT_DIR", default_value = ".copilot/artifacts")]
    artifact_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ChatArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, value_enum, default_value = "scripted")]
    provider: Provider,
    /// Script for the scripted provider. Defaults to the case1 fixture.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Initial step budget per delegated task.
    #[arg(long)]
    budget: Option<u32>,
    /// Continue an existing session instead of creating one.
    #[arg(long)]
    session: Option<String>,
    #[arg(long, env = "DATA_LAKE_PATH")]
    lake: Option<PathBuf>,
    #[arg(long, env = "CORPUS_PATH")]
    corpus: Option<PathBuf>,
}

/// The repository root when run from a checkout, for fixture defaults.
fn repo_root() -> PathBuf {
    let cwd = std::env::current_dir().unwrap_or_default();
    if cwd.join("fixtures").is_dir() {
        return cwd;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn existing(path: PathBuf) -> Option<PathBuf> {
    path.exists().then_some(path)
}

fn settings(target: &Target, chat: Option<&ChatArgs>) -> Settings {
    let root = repo_root();
    let mut settings = Settings {
        session_dir: target.session_dir.clone(),
        artifact_dir: target.artifact_dir.clone(),
        lake_path: None,
        corpus_path: None,
        provider: ProviderChoice::Disabled,
        sandbox: SandboxChoice::Stub,
        budget: None,
    };
    if let Some(c) = chat {
        settings.provider = match c.provider {
            Provider::Scripted => ProviderChoice::Scripted(
                c.script
                    .clone()
                    .unwrap_or_else(|| root.join("fixtures/scripts/case1.jsonl")),
            ),
            Provider::Live => ProviderChoice::Live,
        };
        if matches!(c.provider, Provider::Live) {
            settings.sandbox = SandboxChoice::Process;
        }
        settings.budget = c.budget;
        settings.lake_path = c
            .lake
            .clone()
            .or_else(|| existing(root.join("fixtures/lake")));
        settings.corpus_path = c
            .corpus
            .clone()
            .or_else(|| existing(root.join("fixtures/corpus/documents.json")));
    }
    settings
}

/// Connects to `--server`, or serves `settings` in-process on a free port.
async fn connect(target: &Target, settings: Option<Settings>) -> anyhow::Result<Client> {
    if let Some(url) = &target.server {
        return Ok(Client::new(url.clone()));
    }
    let settings = settings.context("no server given")?;
    let service = tokio::task::spawn_blocking(move || settings.build())
        .await?
        .context("starting the session service")?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move { axum::serve(listener, router(Arc::new(service))).await });
    Ok(Client::new(format!("http://{addr}")))
}

async fn chat(args: ChatArgs) -> anyhow::Result<()> {
    if args.target.server.is_some() && (args.script.is_some() || args.budget.is_some()) {
        bail!("--script and --budget configure the in-process server and cannot be combined with --server");
    }
    let client = connect(&args.target, Some(settings(&args.target, Some(&args)))).await?;
    let id = match &args.session {
        Some(id) => id.clone(),
        None => client.create_session().await?.session_id,
    };
    eprintln!("session {id}");
    let interactive = std::io::stdin().is_terminal();
    let mut lines = std::io::stdin().lock().lines();
    loop {
        if interactive {
            eprint!("> ");
            std::io::stderr().flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut events = match client.post_message(&id, &line).await {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                continue;
            }
        };
        while let Some(event) = events.next().await {
            match event {
                Ok(e) => println!("{}", render::event(&e)),
                Err(e) => {
                    eprintln!("error: {e}");
                    break;
                }
            }
        }
    }
    Ok(())
}

async fn replay(id: &str, target: &Target) -> anyhow::Result<()> {
    let client = connect(target, Some(settings(target, None))).await?;
    let events = client.history(id, None).await?;
    for e in &events {
        println!("{}", render::event(e));
    }
    let state =
        SessionState::replay(&events).with_context(|| format!("session {id} does not replay"))?;
    println!(
        "{} events, {} tasks, {} answers",
        events.len(),
        state.tasks.len(),
        state.final_answers.len()
    );
    Ok(())
}

fn verify(root: Option<PathBuf>) -> ExitCode {
    let root = root.unwrap_or_else(repo_root);
    let results = copilot_acceptance::run_all(&root);
    for c in &results {
        println!("{c}");
    }
    if results.iter().all(|c| c.ok()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Chat(args) => chat(args).await?,
        Command::Replay { session_id, target } => replay(&session_id, &target).await?,
        Command::Fixtures {
            command: FixturesCommand::Verify { root },
        } => return Ok(tokio::task::spawn_blocking(move || verify(root)).await?),
    }
    Ok(ExitCode::SUCCESS)
}
