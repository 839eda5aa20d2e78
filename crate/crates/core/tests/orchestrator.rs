use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use proptest::prelude::*;
use serde_json::{json, Value};

use copilot_core::artifacts::ArtifactStore;
use copilot_core::lake::DataLake;
use copilot_core::llm::{
    ChatMessage, ChatProvider, GenerationParams, ProviderError, ProviderResponse, Role, Script,
    ScriptEntry, ScriptedProvider,
};
use copilot_core::orchestrator::{
    assemble_context, Agent, BudgetChange, ErrorCode, EventBody, EventKind, Limits, Orchestrator,
    SessionEvent, SessionState, TaskOutcome, TurnOutcome, EXTENSION_MARKER,
};
use copilot_core::rag::Corpus;
use copilot_core::tags::{parse_segments, SegmentKind};
use copilot_core::toolkit::{
    analytics_tools, ParamSpec, ParamType, SandboxSessions, StandardTools, StubBackend,
    ToolDescriptor, ToolOutput, ToolRegistry, DATABASE_TOOLS,
};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Wraps the scripted provider and keeps every request it was sent.
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
        self.requests.lock().push(messages.to_vec());
        self.inner.complete(messages, tools, params)
    }
}

fn fake_registry() -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    for name in DATABASE_TOOLS {
        let d = ToolDescriptor::new(name, "fake database tool").param(ParamSpec::optional(
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
                    "{n} ok: {}",
                    args.get("query")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                )))
            }),
        )
        .unwrap();
    }
    for (d, h) in analytics_tools(false) {
        reg.register(d, h).unwrap();
    }
    reg
}

fn full_registry() -> ToolRegistry {
    let lake = DataLake::load_fixture(root().join("fixtures/lake")).unwrap();
    let corpus = Corpus::load(&root().join("fixtures/corpus/documents.json")).unwrap();
    StandardTools {
        lake: Arc::new(lake),
        corpus: Arc::new(corpus),
        rag_provider: None,
        julia: false,
    }
    .registry()
}

struct Outcome {
    state: SessionState,
    events: Vec<SessionEvent>,
    outcomes: Vec<TurnOutcome>,
    requests: Vec<Vec<ChatMessage>>,
}

fn run(
    registry: &ToolRegistry,
    entries: Vec<ScriptEntry>,
    turns: &[&str],
    limits: Limits,
) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = ArtifactStore::seeded(dir.path().join("artifacts"), 7).unwrap();
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
        outcomes.push(orch.run_user_turn(&mut state, turn, &mut sink).unwrap());
    }
    Outcome {
        state,
        events,
        outcomes,
        requests: provider.requests.into_inner(),
    }
}

fn kinds(events: &[SessionEvent]) -> Vec<&'static str> {
    events.iter().map(|e| e.kind().as_str()).collect()
}

fn text(t: &str) -> ScriptEntry {
    ScriptEntry::text(t)
}

fn tool(t: &str, name: &str, args: Value) -> ScriptEntry {
    ScriptEntry::tool(t, name, args)
}

fn delegate(role: &str, task: &str) -> ScriptEntry {
    tool("<step>delegate</step>", role, json!({ "task": task }))
}

fn case1() -> Vec<ScriptEntry> {
    Script::from_jsonl(
        &std::fs::read_to_string(root().join("fixtures/scripts/case1.jsonl")).unwrap(),
    )
    .unwrap()
    .entries
}

const CASE1_QUESTION: &str = "Draw the collaboration network of Harvard University.";

#[test]
fn direct_answer_is_three_events() {
    let out = run(
        &fake_registry(),
        vec![text("<thinking>easy</thinking><answer>42</answer>")],
        &["q"],
        Limits::default(),
    );
    assert_eq!(
        kinds(&out.events),
        ["user_message", "agent_message", "final_answer"]
    );
    assert_eq!(out.outcomes, [TurnOutcome::Answered("42".into())]);
    assert!(out.state.tasks.is_empty());
}

#[test]
fn manager_prose_without_tools_is_the_answer() {
    let out = run(
        &fake_registry(),
        vec![text("<thinking>x</thinking>Plain reply.")],
        &["q"],
        Limits::default(),
    );
    assert_eq!(out.outcomes, [TurnOutcome::Answered("Plain reply.".into())]);
}

#[test]
fn case1_matches_golden_and_replays() {
    let registry = full_registry();
    let started = Instant::now();
    let first = run(&registry, case1(), &[CASE1_QUESTION], Limits::default());
    let second = run(&registry, case1(), &[CASE1_QUESTION], Limits::default());
    assert!(started.elapsed().as_secs_f64() < 5.0);

    let golden_path = root().join("fixtures/golden/case1_event_kinds.json");
    let got = kinds(&first.events);
    if std::env::var_os("COPILOT_BLESS").is_some() {
        std::fs::write(
            &golden_path,
            serde_json::to_string_pretty(&got).unwrap() + "\n",
        )
        .unwrap();
    }
    let golden: Vec<String> =
        serde_json::from_str(&std::fs::read_to_string(&golden_path).unwrap()).unwrap();
    assert_eq!(got, golden);
    assert!(
        matches!(&first.outcomes[0], TurnOutcome::Answered(a) if a.contains("weighted network"))
    );

    let a: Vec<String> = first
        .events
        .iter()
        .map(SessionEvent::canonical_json)
        .collect();
    let b: Vec<String> = second
        .events
        .iter()
        .map(SessionEvent::canonical_json)
        .collect();
    assert_eq!(a, b, "two replays differ");

    let replayed = SessionState::replay(&first.events).unwrap();
    assert_eq!(replayed, first.state);
    assert_eq!(
        assemble_context(&replayed, Agent::ResearchManager, None).unwrap(),
        assemble_context(&first.state, Agent::ResearchManager, None).unwrap()
    );
    // The last manager request is exactly the replayed context minus the final answer message.
    let live_last = first.requests.last().unwrap();
    let mut rebuilt = assemble_context(&replayed, Agent::ResearchManager, None)
        .unwrap()
        .messages;
    rebuilt.pop();
    assert_eq!(&rebuilt, live_last);
}

#[test]
fn case1_figure_is_revised_exactly_once() {
    let out = run(
        &full_registry(),
        case1(),
        &[CASE1_QUESTION],
        Limits::default(),
    );
    let rewards: Vec<(usize, f64)> = out
        .events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match &e.body {
            EventBody::Evaluation { record, .. } => record.reward.map(|r| (i, r)),
            _ => None,
        })
        .collect();
    let order: Vec<f64> = rewards.iter().map(|r| r.1).collect();
    assert_eq!(order, [0.9, 0.9, 0.95, 0.95, 0.75, 0.85, 0.9]);
    let (at75, at85) = (rewards[4].0, rewards[5].0);
    let turns_between: Vec<&SessionEvent> = out.events[at75..at85]
        .iter()
        .filter(|e| matches!(&e.body, EventBody::AgentMessage { tool_calls, .. } if tool_calls.iter().any(|c| c.tool_name == "python")))
        .collect();
    assert_eq!(turns_between.len(), 1);
    for e in &out.events {
        if let EventBody::ToolResult {
            result, tool_name, ..
        } = &e.body
        {
            assert!(result.ok, "{tool_name} failed: {result:?}");
        }
    }
    let analytics = out
        .state
        .tasks
        .iter()
        .find(|t| t.role == Agent::AnalyticsSpecialist)
        .unwrap();
    assert!(
        matches!(analytics.outcome, Some(TaskOutcome::Completed { reward, .. }) if reward == 0.9)
    );
}

/// The three context-memory rules, checked on any finished session.
fn assert_context_invariants(state: &SessionState) {
    let manager = assemble_context(state, Agent::ResearchManager, None).unwrap();
    for (m, author) in manager.messages.iter().zip(&manager.authors) {
        assert!(!m.has_image());
        if author.is_specialist() || *author == Agent::EvaluationSpecialist {
            let thinking = parse_segments(&m.text())
                .iter()
                .filter(|s| s.kind == SegmentKind::Thinking)
                .count();
            assert_eq!(
                thinking,
                0,
                "specialist thinking leaked into the manager context: {}",
                m.text()
            );
        }
    }
    let manager_text: String = manager.messages.iter().map(ChatMessage::text).collect();
    for (name, fig) in &state.figures {
        assert!(!manager_text.contains(&format!("[image: {name}]")));
        assert!(manager_text.contains(&fig.caption));
    }
    for task in &state.tasks {
        let ctx = assemble_context(state, task.role, Some(task.task_id)).unwrap();
        for (m, author) in ctx.messages.iter().zip(&ctx.authors) {
            assert!(!m.has_image());
            assert!(
                !author.is_specialist() || *author == task.role,
                "{author} content in a {} context",
                task.role
            );
        }
        let text: String = ctx.messages.iter().map(ChatMessage::text).collect();
        for other in state.tasks.iter().filter(|t| t.role != task.role) {
            assert!(
                !text.contains(&other.task),
                "task text of {} visible to {}",
                other.role,
                task.role
            );
        }
        for name in state.figures.keys() {
            assert!(!text.contains(&format!("[image: {name}]")));
        }
    }
}

#[test]
fn case1_context_memory_rules() {
    let out = run(
        &full_registry(),
        case1(),
        &[CASE1_QUESTION],
        Limits::default(),
    );
    assert_context_invariants(&out.state);
    let manager = assemble_context(&out.state, Agent::ResearchManager, None).unwrap();
    let all: String = manager.messages.iter().map(ChatMessage::text).collect();
    assert!(all.contains("Weighted collaboration network of Harvard University"));
    assert!(all.contains("Harvard University was resolved to institution 136199984"));
    // Only evaluator requests carry pixels; agent requests never do.
    let image_requests = out
        .requests
        .iter()
        .filter(|r| r.iter().any(ChatMessage::has_image))
        .count();
    assert_eq!(
        image_requests, 2,
        "only the two visual evaluations see pixels"
    );
}

#[test]
fn specialist_transcript_shape() {
    let script = vec![
        delegate("database_specialist", "count papers"),
        tool(
            "<step>count</step>",
            "sql_query",
            json!({"query": "SELECT 1"}),
        ),
        text("<reward>0.9</reward>"),
        text("done"),
        text("<report>counted</report><reward>0.95</reward>"),
        text("<answer>ok</answer>"),
    ];
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    let labels: Vec<&str> = out.state.tasks[0]
        .transcript
        .iter()
        .map(|e| e.label())
        .collect();
    assert_eq!(
        labels,
        [
            "assistant",
            "tool_result",
            "tool_evaluation",
            "assistant",
            "task_evaluation"
        ]
    );
    // The report reaches the manager verbatim.
    let manager_request = out.requests.last().unwrap();
    let tool_msg = manager_request
        .iter()
        .find(|m| m.role == Role::Tool)
        .unwrap();
    assert!(tool_msg.text().contains("Report:\ncounted"));
    assert!(tool_msg.text().contains("reward 0.95"));
}

#[test]
fn continue_leaves_the_prompt_alone() {
    let script = vec![
        delegate("database_specialist", "t"),
        tool("<step>a</step>", "sql_query", json!({"query": "A"})),
        text("<reward>0.9</reward><reflection>unused</reflection>"),
        text("done"),
        text("<report>r</report><reward>0.9</reward>"),
        text("<answer>ok</answer>"),
    ];
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    // Request 3 is the specialist's second turn.
    let req = &out.requests[3];
    assert_eq!(req.len(), 4);
    assert_eq!(req[3].text(), "sql_query ok: A");
    assert!(!req.iter().any(|m| m.text().contains("unused")));
}

#[test]
fn adjust_shows_the_reflection_in_a_tool_message() {
    let script = vec![
        delegate("database_specialist", "t"),
        tool("<step>a</step>", "sql_query", json!({"query": "A"})),
        text("<reward>0.75</reward><reflection>fix the node-weight calculation</reflection>"),
        text("done"),
        text("<report>r</report><reward>0.9</reward>"),
        text("<answer>ok</answer>"),
    ];
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    let req = &out.requests[3];
    let tool_msg = req.iter().find(|m| m.role == Role::Tool).unwrap();
    assert!(tool_msg.text().contains("fix the node-weight calculation"));
    assert!(tool_msg.text().starts_with("sql_query ok: A"));
}

#[test]
fn backtrack_removes_the_failed_action() {
    let script = vec![
        delegate("database_specialist", "t"),
        tool("<step>bad</step>", "sql_query", json!({"query": "BAD"})),
        text("<reward>0.4</reward><reflection>wrong table</reflection>"),
        tool("<step>good</step>", "sql_query", json!({"query": "GOOD"})),
        text("<reward>0.9</reward>"),
        text("done"),
        text("<report>r</report><reward>0.9</reward>"),
        text("<answer>ok</answer>"),
    ];
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    let reprompt = &out.requests[3];
    let all: String = reprompt.iter().map(ChatMessage::text).collect();
    assert!(!all.contains("BAD"));
    assert!(all.contains("wrong table"));
    assert!(!reprompt.iter().any(|m| m.role == Role::Assistant));
    assert_eq!(out.state.tasks[0].backtracks, 1);
    // The log keeps what the context forgot.
    assert!(out.events.iter().any(
        |e| matches!(&e.body, EventBody::ToolCall { call, .. } if call.arguments["query"] == "BAD")
    ));
}

#[test]
fn third_backtrack_fails_the_task_and_the_manager_continues() {
    let mut script = vec![delegate("database_specialist", "t")];
    for i in 0..3 {
        script.push(tool(
            "<step>try</step>",
            "sql_query",
            json!({ "query": format!("Q{i}") }),
        ));
        script.push(text("<reward>0.2</reward>"));
    }
    script.push(text("<answer>could not do it</answer>"));
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    let err = out
        .events
        .iter()
        .find_map(|e| match &e.body {
            EventBody::Error {
                task_id: Some(0),
                error,
            } => Some(error.code),
            _ => None,
        })
        .unwrap();
    assert_eq!(err, ErrorCode::BacktrackLimit);
    assert!(matches!(
        out.state.tasks[0].outcome,
        Some(TaskOutcome::Failed { .. })
    ));
    assert_eq!(
        out.outcomes,
        [TurnOutcome::Answered("could not do it".into())]
    );
}

#[test]
fn ninth_delegation_fails_the_turn() {
    let mut script = Vec::new();
    for _ in 0..9 {
        script.push(delegate("database_specialist", "t"));
        script.push(text("nothing to do"));
        script.push(text("<report>nothing</report><reward>0.9</reward>"));
    }
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    assert_eq!(out.state.tasks.len(), 8);
    let last = out.events.last().unwrap();
    assert!(
        matches!(&last.body, EventBody::Error { error, .. } if error.code == ErrorCode::DelegationCap)
    );
    assert!(
        matches!(&out.outcomes[0], TurnOutcome::Failed(e) if e.code == ErrorCode::DelegationCap)
    );
    assert!(!out.state.turn_open);
}

fn single_steps(n: usize, extension_at: &[usize]) -> Vec<ScriptEntry> {
    let mut script = vec![delegate("database_specialist", "t")];
    for i in 0..n {
        let marker = if extension_at.contains(&i) {
            EXTENSION_MARKER
        } else {
            ""
        };
        script.push(tool(
            &format!("{marker}<step>s{i}</step>"),
            "sql_query",
            json!({ "query": format!("{i}") }),
        ));
        script.push(text("<reward>0.9</reward>"));
    }
    script.push(text("<answer>stopped</answer>"));
    script
}

fn executed_calls(events: &[SessionEvent]) -> usize {
    events
        .iter()
        .filter(|e| e.kind() == EventKind::ToolCall)
        .count()
}

fn budget_changes(events: &[SessionEvent]) -> Vec<BudgetChange> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Budget { record, .. } => Some(record.change),
            _ => None,
        })
        .collect()
}

#[test]
fn budget_cuts_off_at_twenty() {
    let mut script = single_steps(21, &[]);
    // The 21st response is refused, so its evaluation entry is never consumed.
    script.remove(script.len() - 2);
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    assert_eq!(executed_calls(&out.events), 20);
    assert_eq!(budget_changes(&out.events), [BudgetChange::Exhausted]);
    assert!(
        matches!(&out.state.tasks[0].outcome, Some(TaskOutcome::Failed { reason }) if reason.contains("budget"))
    );
    assert_eq!(out.outcomes, [TurnOutcome::Answered("stopped".into())]);
}

#[test]
fn one_extension_allows_thirty() {
    let mut script = single_steps(31, &[3]);
    script.remove(script.len() - 2);
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    assert_eq!(executed_calls(&out.events), 30);
    assert_eq!(
        budget_changes(&out.events),
        [BudgetChange::Extended, BudgetChange::Exhausted]
    );
}

#[test]
fn extensions_never_exceed_two() {
    let mut script = single_steps(41, &[0, 1, 2, 3]);
    script.remove(script.len() - 2);
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    assert_eq!(executed_calls(&out.events), 40);
    assert_eq!(
        budget_changes(&out.events),
        [
            BudgetChange::Extended,
            BudgetChange::Extended,
            BudgetChange::ExtensionDenied,
            BudgetChange::ExtensionDenied,
            BudgetChange::Exhausted
        ]
    );
    assert_eq!(out.state.tasks[0].budget.extensions_granted, 2);
}

#[test]
fn configured_budget_is_respected() {
    let mut script = single_steps(4, &[]);
    script.remove(script.len() - 2);
    let limits = Limits {
        budget: 3,
        ..Limits::default()
    };
    let out = run(&fake_registry(), script, &["q"], limits);
    assert_eq!(executed_calls(&out.events), 3);
}

#[test]
fn reported_count_disagreement_is_logged_and_ignored() {
    let script = vec![
        delegate("database_specialist", "t"),
        tool(
            "<step>a</step><count>5</count>",
            "sql_query",
            json!({"query": "A"}),
        ),
        text("<reward>0.9</reward>"),
        text("done"),
        text("<report>r</report><reward>0.9</reward>"),
        text("<answer>ok</answer>"),
    ];
    let out = run(&fake_registry(), script, &["q"], Limits::default());
    let record = out
        .events
        .iter()
        .find_map(|e| match &e.body {
            EventBody::Budget { record, .. } => Some(record.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(record.change, BudgetChange::Discrepancy);
    assert_eq!(record.reported, Some(5));
    assert_eq!(record.remaining, 19);
    assert_eq!(out.state.tasks[0].budget.remaining, 19);
}

#[test]
fn evaluator_retry_is_recorded_and_protocol_failure_aborts_the_turn() {
    let script = vec![
        delegate("database_specialist", "t"),
        tool("<step>a</step>", "sql_query", json!({"query": "A"})),
        text("looks fine"),
        text("still fine"),
        text("<answer>second turn works</answer>"),
    ];
    let out = run(
        &fake_registry(),
        script,
        &["first", "second"],
        Limits::default(),
    );
    let eval = out
        .events
        .iter()
        .find_map(|e| match &e.body {
            EventBody::Evaluation { record, .. } => Some(record.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(eval.attempts.len(), 2);
    assert!(eval.error.is_some());
    assert!(
        matches!(&out.outcomes[0], TurnOutcome::Failed(e) if e.code == ErrorCode::EvaluationProtocol)
    );
    assert_eq!(
        out.outcomes[1],
        TurnOutcome::Answered("second turn works".into())
    );
    assert_eq!(out.state.provider_calls, 5);
}

#[test]
fn provider_failure_is_an_error_event() {
    let out = run(&fake_registry(), vec![], &["q"], Limits::default());
    assert_eq!(kinds(&out.events), ["user_message", "error"]);
    assert!(matches!(&out.outcomes[0], TurnOutcome::Failed(e) if e.code == ErrorCode::Provider));
}

#[test]
fn replay_rejects_gaps_and_accepts_every_prefix() {
    assert_eq!(SessionState::replay(&[]).unwrap(), SessionState::new());
    let out = run(
        &full_registry(),
        case1(),
        &[CASE1_QUESTION],
        Limits::default(),
    );
    for n in 0..=out.events.len() {
        let s = SessionState::replay(&out.events[..n]).unwrap();
        assert_eq!(s.next_seq(), n as u64);
    }
    let mut gapped = out.events.clone();
    gapped.remove(4);
    let err = SessionState::replay(&gapped).unwrap_err();
    assert_eq!(err.seq, 5);
}

fn arb_entry() -> impl Strategy<Value = ScriptEntry> {
    prop_oneof![
        Just(delegate("database_specialist", "db task")),
        Just(delegate("analytics_specialist", "plot task")),
        Just(text("<answer>done</answer>")),
        Just(tool(
            "<thinking>hidden</thinking><step>q</step>",
            "sql_query",
            json!({"query": "Q"})
        )),
        Just(tool(
            "<step>p</step>",
            "python",
            json!({"query": "figure(\"f\")"})
        )),
        Just(tool(
            &format!("{EXTENSION_MARKER}<step>p</step>"),
            "python",
            json!({"query": "x = 1"})
        )),
        (0u32..=10).prop_map(|r| text(&format!(
            "<reward>{}</reward><reflection>try again</reflection>",
            r as f64 / 10.0
        ))),
        (0u32..=10).prop_map(|r| text(&format!(
            "<thinking>t</thinking><caption>a figure</caption><reward>{}</reward>",
            r as f64 / 10.0
        ))),
        Just(text(
            "<thinking>secret</thinking><report>report</report><reward>0.9</reward>"
        )),
        Just(text("plain text")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_script_terminates_with_sound_state(entries in proptest::collection::vec(arb_entry(), 0..60)) {
        let registry = fake_registry();
        let n = entries.len();
        let out = run(&registry, entries, &["q1", "q2"], Limits::default());
        prop_assert!(out.requests.len() <= n + 2);
        for (i, e) in out.events.iter().enumerate() {
            prop_assert_eq!(e.seq, i as u64);
        }
        prop_assert!(!out.state.turn_open);
        prop_assert!(copilot_core::orchestrator::ends_turn(out.events.last().unwrap()));
        let replayed = SessionState::replay(&out.events).unwrap();
        prop_assert_eq!(&replayed, &out.state);
        for t in &out.state.tasks {
            prop_assert!(t.budget.extensions_granted <= 2);
            prop_assert!(t.budget.used <= 20 + 10 * t.budget.extensions_granted);
            prop_assert!(t.backtracks <= 3);
        }
        assert_context_invariants(&out.state);
    }
}
