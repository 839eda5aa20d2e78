//! Scripted orchestrator runs with every provider request recorded.

use std::path::Path;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use copilot_core::artifacts::ArtifactStore;
use copilot_core::lake::DataLake;
use copilot_core::llm::{
    ChatMessage, ChatProvider, GenerationParams, ProviderError, ProviderResponse, Script,
    ScriptEntry, ScriptedProvider,
};
use copilot_core::orchestrator::{
    Limits, Orchestrator, SessionEvent, SessionState, TurnOutcome, EXTENSION_MARKER,
};
use copilot_core::rag::Corpus;
use copilot_core::toolkit::{
    ParamSpec, ParamType, SandboxSessions, StandardTools, StubBackend, ToolDescriptor, ToolOutput,
    ToolRegistry, DATABASE_TOOLS,
};

pub const CASE1_QUESTION: &str = "Draw the collaboration network of Harvard University.";

struct Recording {
    inner: ScriptedProvider,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ChatProvider for Recording {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDescriptor],
        params: &GenerationParams,
    ) -> Result<ProviderResponse, ProviderError> {
        self.requests
            .lock()
            .expect("not poisoned")
            .push(messages.to_vec());
        self.inner.complete(messages, tools, params)
    }
}

pub struct Run {
    pub state: SessionState,
    pub events: Vec<SessionEvent>,
    pub outcomes: Vec<TurnOutcome>,
    pub requests: Vec<Vec<ChatMessage>>,
}

pub fn run(
    registry: &ToolRegistry,
    entries: Vec<ScriptEntry>,
    turns: &[&str],
    limits: Limits,
) -> Result<Run, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let artifacts =
        ArtifactStore::seeded(dir.path().join("artifacts"), 7).map_err(|e| e.to_string())?;
    let mut sandboxes = SandboxSessions::new(Arc::new(StubBackend), dir.path().to_path_buf());
    let provider = Recording {
        inner: ScriptedProvider::new(Script::new(entries)),
        requests: Mutex::new(Vec::new()),
    };
    let mut state = SessionState::new();
    let mut events = Vec::new();
    let mut outcomes = Vec::new();
    for turn in turns {
        let mut orch = Orchestrator {
            provider: &provider,
            tools: registry,
            artifacts: &artifacts,
            sandboxes: &mut sandboxes,
            limits,
        };
        let mut sink = |e: &SessionEvent| {
            events.push(e.clone());
            Ok(())
        };
        outcomes.push(
            orch.run_user_turn(&mut state, turn, &mut sink)
                .map_err(|e| e.to_string())?,
        );
    }
    Ok(Run {
        state,
        events,
        outcomes,
        requests: provider.requests.into_inner().expect("not poisoned"),
    })
}

pub fn full_registry(root: &Path) -> Result<ToolRegistry, String> {
    let lake = DataLake::load_fixture(root.join("fixtures/lake")).map_err(|e| e.to_string())?;
    let corpus =
        Corpus::load(&root.join("fixtures/corpus/documents.json")).map_err(|e| e.to_string())?;
    Ok(StandardTools {
        lake: Arc::new(lake),
        corpus: Arc::new(corpus),
        rag_provider: None,
        julia: false,
    }
    .registry())
}

/// Database tools that echo their query and touch nothing.
pub fn echo_registry() -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    for name in DATABASE_TOOLS {
        let d = ToolDescriptor::new(name, "echo").param(ParamSpec::optional(
            "query",
            ParamType::String,
            "q",
            json!(""),
        ));
        let n = name.to_string();
        reg.register(
            d,
            Box::new(move |args, _| {
                Ok(ToolOutput::text(format!(
                    "{n}: {}",
                    args.get("query")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                )))
            }),
        )
        .expect("distinct names");
    }
    reg
}

pub fn case1_script(root: &Path) -> Result<Vec<ScriptEntry>, String> {
    let text = std::fs::read_to_string(root.join("fixtures/scripts/case1.jsonl"))
        .map_err(|e| e.to_string())?;
    Ok(Script::from_jsonl(&text)
        .map_err(|e| e.to_string())?
        .entries)
}

/// One delegation whose specialist emits `n` single-step tool turns, each
/// followed by a passing tool evaluation. Turns listed in `extension_at`
/// also ask for more steps. The refused turn never reaches evaluation, so
/// its evaluation entry is left out.
pub fn single_step_script(n: usize, extension_at: &[usize], executed: usize) -> Vec<ScriptEntry> {
    let mut script = vec![ScriptEntry::tool(
        "<step>delegate</step>",
        "database_specialist",
        json!({ "task": "count rows one step at a time" }),
    )];
    for i in 0..n {
        let marker = if extension_at.contains(&i) {
            EXTENSION_MARKER
        } else {
            ""
        };
        script.push(ScriptEntry::tool(
            format!("{marker}<step>s{i}</step>"),
            "sql_query",
            json!({ "query": format!("{i}") }),
        ));
        if i < executed {
            script.push(ScriptEntry::text("<reward>0.9</reward>"));
        }
    }
    script.push(ScriptEntry::text("<answer>stopped</answer>"));
    script
}
