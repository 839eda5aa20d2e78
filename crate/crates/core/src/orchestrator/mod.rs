//! The agent state machines: the manager's delegation loop, specialist tool
//! loops under step budgets, and the reward gate between them.
//!
//! Everything the orchestrator does is expressed as [`SessionEvent`]s. Each
//! event is folded into the [`SessionState`] and handed to the caller's sink
//! before the next provider call, so the log is always the full story.

mod budget;
mod context;
mod events;
mod state;

use chrono::Utc;
use serde_json::Value;
use thiserror::Error;

use crate::artifacts::ArtifactStore;
use crate::evaluation::{
    evaluate_task, evaluate_tool_call, evaluate_visual, gate, Evaluated, EvaluationError,
    EvaluationStage, GateDecision, ToolEvalContext,
};
use crate::llm::{ChatProvider, GenerationParams, ToolCallRequest};
use crate::tags::{last_body, parse_segments, serialize_without, SegmentKind};
use crate::toolkit::{
    delegation_tools, SandboxSessions, ToolContext, ToolRegistry, ToolResult, ANALYTICS_TOOLS,
    DATABASE_TOOLS, LITERATURE_TOOLS,
};

pub use budget::{
    account_step, StepAccount, StepBudget, DEFAULT_BUDGET, EXTENSION_MARKER, EXTENSION_STEPS,
    MAX_EXTENSIONS,
};
pub use context::{
    assemble_context, delegation_result, render_tool_result, render_transcript, substitute_figures,
    AssembledContext, ContextError,
};
pub use events::{
    ends_turn, Agent, BudgetChange, BudgetRecord, ErrorCode, ErrorRecord, EvaluationRecord,
    EventBody, EventKind, FigureStandIn, SessionEvent, TaskId,
};
pub use state::{
    ManagerEntry, ReplayError, SessionState, TaskOutcome, TaskRecord, TranscriptEntry,
};

pub const MAX_BACKTRACKS: u32 = 3;
pub const MAX_DELEGATIONS: u32 = 8;
/// How many recent transcript entries the tool evaluator sees.
const EVAL_TAIL: usize = 6;

pub fn system_prompt(agent: Agent) -> &'static str {
    match agent {
        Agent::ResearchManager => include_str!("../../assets/prompts/research_manager.txt"),
        Agent::LiteratureSpecialist => {
            include_str!("../../assets/prompts/literature_specialist.txt")
        }
        Agent::DatabaseSpecialist => include_str!("../../assets/prompts/database_specialist.txt"),
        Agent::AnalyticsSpecialist => include_str!("../../assets/prompts/analytics_specialist.txt"),
        other => panic!("{other} has no system prompt"),
    }
}

/// Tool names each role may call. The manager's tools are the delegations.
pub fn toolset(agent: Agent) -> &'static [&'static str] {
    match agent {
        Agent::ResearchManager => crate::toolkit::DELEGATION_TOOLS,
        Agent::LiteratureSpecialist => LITERATURE_TOOLS,
        Agent::DatabaseSpecialist => DATABASE_TOOLS,
        Agent::AnalyticsSpecialist => ANALYTICS_TOOLS,
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentConfig {
    pub role: Agent,
    pub system_prompt: &'static str,
    pub toolset: &'static [&'static str],
    pub initial_budget: u32,
}

impl AgentConfig {
    pub fn for_role(role: Agent, initial_budget: u32) -> Option<Self> {
        (role == Agent::ResearchManager || role.is_specialist()).then(|| Self {
            role,
            system_prompt: system_prompt(role),
            toolset: toolset(role),
            initial_budget,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub budget: u32,
    pub max_backtracks: u32,
    pub max_delegations: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            max_backtracks: MAX_BACKTRACKS,
            max_delegations: MAX_DELEGATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestratorError {
    #[error("could not record event {seq}: {message}")]
    Sink { seq: u64, message: String },
    #[error(transparent)]
    State(#[from] ReplayError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnOutcome {
    Answered(String),
    Failed(ErrorRecord),
}

enum Stop {
    Turn(Option<TaskId>, ErrorRecord),
    Hard(OrchestratorError),
}

impl From<OrchestratorError> for Stop {
    fn from(e: OrchestratorError) -> Self {
        Stop::Hard(e)
    }
}

fn turn_error(task: Option<TaskId>, code: ErrorCode, message: impl Into<String>) -> Stop {
    Stop::Turn(
        task,
        ErrorRecord {
            code,
            message: message.into(),
        },
    )
}

fn evaluation_code(e: &EvaluationError) -> ErrorCode {
    match e {
        EvaluationError::Provider(_) => ErrorCode::Provider,
        _ => ErrorCode::EvaluationProtocol,
    }
}

/// Receives every event right after it is folded into the state.
pub type EventSink<'a> = dyn FnMut(&SessionEvent) -> Result<(), String> + 'a;

/// The dependencies of one user turn.
pub struct Orchestrator<'a> {
    pub provider: &'a dyn ChatProvider,
    pub tools: &'a ToolRegistry,
    pub artifacts: &'a ArtifactStore,
    pub sandboxes: &'a mut SandboxSessions,
    pub limits: Limits,
}

struct Run<'o, 'a, 's> {
    o: &'o mut Orchestrator<'a>,
    state: &'s mut SessionState,
    sink: &'s mut EventSink<'s>,
}

impl Orchestrator<'_> {
    /// Runs the manager loop for one user message until it answers or the
    /// turn fails. Failures inside the turn are events, not `Err`s; `Err` means
    /// the state or the event sink could not be updated.
    pub fn run_user_turn<'s>(
        &mut self,
        state: &'s mut SessionState,
        text: &str,
        sink: &'s mut EventSink<'s>,
    ) -> Result<TurnOutcome, OrchestratorError> {
        // A turn left open by a crash is closed when the new message is applied.
        let mut run = Run {
            o: self,
            state,
            sink,
        };
        match run.turn(text) {
            Ok(answer) => Ok(TurnOutcome::Answered(answer)),
            Err(Stop::Turn(task_id, error)) => {
                run.emit(
                    Agent::Orchestrator,
                    EventBody::Error {
                        task_id,
                        error: error.clone(),
                    },
                )?;
                Ok(TurnOutcome::Failed(error))
            }
            Err(Stop::Hard(e)) => Err(e),
        }
    }
}

impl Run<'_, '_, '_> {
    fn emit(&mut self, agent: Agent, body: EventBody) -> Result<(), OrchestratorError> {
        let event = SessionEvent {
            seq: self.state.next_seq(),
            timestamp: Utc::now(),
            agent,
            body,
        };
        self.state.apply(&event)?;
        (self.sink)(&event).map_err(|message| OrchestratorError::Sink {
            seq: event.seq,
            message,
        })
    }

    fn turn(&mut self, text: &str) -> Result<String, Stop> {
        self.emit(
            Agent::User,
            EventBody::UserMessage {
                text: text.to_string(),
            },
        )?;
        let offered = delegation_tools();
        loop {
            let ctx = assemble_context(self.state, Agent::ResearchManager, None)
                .expect("manager context");
            let response = self
                .o
                .provider
                .complete(&ctx.messages, &offered, &GenerationParams::default())
                .map_err(|e| turn_error(None, ErrorCode::Provider, e.to_string()))?;
            self.emit(
                Agent::ResearchManager,
                EventBody::AgentMessage {
                    task_id: None,
                    text: response.text.clone(),
                    tool_calls: response.tool_calls.clone(),
                },
            )?;
            let segments = parse_segments(&response.text);
            let answer = match last_body(&segments, SegmentKind::Answer) {
                Some(a) => Some(a.trim().to_string()),
                None if response.tool_calls.is_empty() => Some(
                    serialize_without(&segments, &[SegmentKind::Thinking])
                        .trim()
                        .to_string(),
                ),
                None => None,
            };
            if let Some(answer) = answer {
                self.emit(
                    Agent::ResearchManager,
                    EventBody::FinalAnswer {
                        text: answer.clone(),
                    },
                )?;
                return Ok(answer);
            }
            for call in &response.tool_calls {
                self.delegate(call, &offered)?;
            }
        }
    }

    fn delegate(
        &mut self,
        call: &ToolCallRequest,
        offered: &[crate::toolkit::ToolDescriptor],
    ) -> Result<(), Stop> {
        if self.state.delegations_this_turn >= self.o.limits.max_delegations {
            return Err(turn_error(
                None,
                ErrorCode::DelegationCap,
                format!(
                    "more than {} delegations in one turn",
                    self.o.limits.max_delegations
                ),
            ));
        }
        let role: Agent = call
            .tool_name
            .parse()
            .ok()
            .filter(|r: &Agent| r.is_specialist())
            .ok_or_else(|| {
                turn_error(
                    None,
                    ErrorCode::Provider,
                    format!("`{}` is not a specialist", call.tool_name),
                )
            })?;
        let descriptor = offered
            .iter()
            .find(|d| d.name == call.tool_name)
            .expect("provider only returns offered tools");
        let args = descriptor
            .validate(&call.arguments)
            .map_err(|e| turn_error(None, ErrorCode::Provider, e.to_string()))?;
        let task_id = self.state.tasks.len() as TaskId;
        self.emit(
            Agent::ResearchManager,
            EventBody::Delegation {
                task_id,
                call_id: call.id.clone(),
                role,
                task: args
                    .get("task")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
                budget: self.o.limits.budget,
            },
        )?;
        self.run_task(task_id)
    }

    fn task(&self, id: TaskId) -> &TaskRecord {
        self.state.task(id).expect("task exists once delegated")
    }

    fn run_task(&mut self, id: TaskId) -> Result<(), Stop> {
        let role = self.task(id).role;
        let tools = self.o.tools.subset(toolset(role));
        self.o.sandboxes.reset(format!("task-{id}"));
        loop {
            let ctx = assemble_context(self.state, role, Some(id)).expect("task context");
            let response = self
                .o
                .provider
                .complete(&ctx.messages, &tools, &GenerationParams::default())
                .map_err(|e| turn_error(Some(id), ErrorCode::Provider, e.to_string()))?;
            self.emit(
                role,
                EventBody::AgentMessage {
                    task_id: Some(id),
                    text: response.text.clone(),
                    tool_calls: response.tool_calls.clone(),
                },
            )?;
            let account = self.task(id).last_account;
            let budget = self.task(id).budget;
            let note = |change, reported| EventBody::Budget {
                task_id: id,
                record: BudgetRecord {
                    change,
                    remaining: budget.remaining,
                    extensions_granted: budget.extensions_granted,
                    reported,
                },
            };
            if account.extension_granted {
                self.emit(Agent::Orchestrator, note(BudgetChange::Extended, None))?;
            }
            if account.extension_denied {
                self.emit(
                    Agent::Orchestrator,
                    note(BudgetChange::ExtensionDenied, None),
                )?;
            }
            if let Some(reported) = account.discrepancy {
                self.emit(
                    Agent::Orchestrator,
                    note(BudgetChange::Discrepancy, Some(reported)),
                )?;
            }
            if response.tool_calls.is_empty() {
                break;
            }
            if account.refused > 0 {
                self.emit(Agent::Orchestrator, note(BudgetChange::Exhausted, None))?;
                return Ok(());
            }
            for call in &response.tool_calls {
                self.emit(
                    role,
                    EventBody::ToolCall {
                        task_id: id,
                        call: call.clone(),
                    },
                )?;
                let result = {
                    let mut tctx = ToolContext {
                        artifacts: self.o.artifacts,
                        sandboxes: self.o.sandboxes,
                    };
                    self.o
                        .tools
                        .dispatch(call, &mut tctx)
                        .unwrap_or_else(|e| ToolResult::failure("", e.to_string()))
                };
                self.emit(
                    role,
                    EventBody::ToolResult {
                        task_id: id,
                        call_id: call.id.clone(),
                        tool_name: call.tool_name.clone(),
                        result: result.clone(),
                    },
                )?;
                if self.judge_call(id, call, &result)? == GateDecision::Backtrack {
                    if self.task(id).backtracks >= self.o.limits.max_backtracks {
                        self.emit(
                            Agent::Orchestrator,
                            EventBody::Error {
                                task_id: Some(id),
                                error: ErrorRecord {
                                    code: ErrorCode::BacktrackLimit,
                                    message: format!(
                                        "backtracked {} times",
                                        self.task(id).backtracks
                                    ),
                                },
                            },
                        )?;
                        return Ok(());
                    }
                    break;
                }
            }
        }
        self.finish_task(id)
    }

    fn finish_task(&mut self, id: TaskId) -> Result<(), Stop> {
        let task = self.task(id);
        let workflow = format!(
            "Task:\n{}\n\nWorkflow:\n{}",
            task.task,
            render_transcript(&task.transcript, &self.state.figures, false)
        );
        let ev = evaluate_task(self.o.provider, &workflow);
        let (reward, report) = match &ev.result {
            Ok(t) => (Some(t.reward), Some(t.report.clone())),
            Err(_) => (None, None),
        };
        self.record(id, EvaluationStage::Task, None, None, &ev, |r| {
            r.reward = reward;
            r.report = report;
        })
    }

    /// Emits the evaluation event and turns an evaluator failure into a stop.
    fn record<T>(
        &mut self,
        id: TaskId,
        stage: EvaluationStage,
        call_id: Option<&str>,
        figure: Option<&str>,
        ev: &Evaluated<T>,
        fill: impl FnOnce(&mut EvaluationRecord),
    ) -> Result<(), Stop> {
        let mut record = EvaluationRecord {
            stage,
            call_id: call_id.map(str::to_string),
            figure: figure.map(str::to_string),
            reward: None,
            gate: None,
            reflection: None,
            caption: None,
            report: None,
            error: ev.result.as_ref().err().map(ToString::to_string),
            attempts: ev.attempts.clone(),
        };
        fill(&mut record);
        self.emit(
            Agent::EvaluationSpecialist,
            EventBody::Evaluation {
                task_id: id,
                record,
            },
        )?;
        match &ev.result {
            Ok(_) => Ok(()),
            Err(e) => Err(turn_error(Some(id), evaluation_code(e), e.to_string())),
        }
    }

    /// Evaluates one tool result: every figure visually, otherwise the call
    /// itself. Returns the gate decision applied to the call.
    fn judge_call(
        &mut self,
        id: TaskId,
        call: &ToolCallRequest,
        result: &ToolResult,
    ) -> Result<GateDecision, Stop> {
        let task = self.task(id);
        let images: Vec<_> = result.images().cloned().collect();
        if images.is_empty() {
            let n = task.transcript.len();
            let tail = render_transcript(
                &task.transcript[n.saturating_sub(EVAL_TAIL)..n.saturating_sub(1)],
                &self.state.figures,
                false,
            );
            let result_text = render_tool_result(result, &self.state.figures);
            let task_text = task.task.clone();
            let ev = evaluate_tool_call(
                self.o.provider,
                &ToolEvalContext {
                    task: &task_text,
                    transcript_tail: &tail,
                    tool_name: &call.tool_name,
                    arguments: &call.arguments,
                    result_text: &result_text,
                },
            );
            let decision = ev
                .result
                .as_ref()
                .map(|t| gate(t.reward).unwrap_or(GateDecision::Backtrack))
                .ok();
            let fields = ev.result.as_ref().ok().cloned();
            self.record(id, EvaluationStage::Tool, Some(&call.id), None, &ev, |r| {
                if let Some(t) = fields {
                    r.reward = Some(t.reward);
                    r.reflection = t.reflection;
                }
                r.gate = decision;
            })?;
            return Ok(decision.expect("recorded evaluations succeeded"));
        }

        let context = format!(
            "Task:\n{}\n\nCode run with {}:\n{}\n\nOutput:\n{}",
            task.task,
            call.tool_name,
            call.arguments
                .get("query")
                .and_then(Value::as_str)
                .unwrap_or_default(),
            result.text
        );
        let mut lowest = f64::INFINITY;
        let mut decision = GateDecision::Continue;
        for (i, image) in images.iter().enumerate() {
            let bytes = self.o.artifacts.read(&image.reference).map_err(|e| {
                turn_error(
                    Some(id),
                    ErrorCode::Internal,
                    format!("reading figure {}: {e}", image.reference),
                )
            })?;
            let ev = evaluate_visual(self.o.provider, &bytes, &image.media_type, &context);
            let fields = ev.result.as_ref().ok().cloned();
            if let Some(v) = &fields {
                lowest = lowest.min(v.reward);
            }
            let last = i + 1 == images.len();
            if last {
                decision = gate(lowest).unwrap_or(GateDecision::Backtrack);
            }
            let f = fields.clone();
            self.record(
                id,
                EvaluationStage::Visual,
                Some(&call.id),
                Some(&image.reference),
                &ev,
                |r| {
                    if let Some(v) = f {
                        r.reward = Some(v.reward);
                        r.reflection = v.reflection;
                        r.caption = Some(v.caption);
                    }
                    if last {
                        r.gate = Some(decision);
                    }
                },
            )?;
            let v = fields.expect("recorded evaluations succeeded");
            let mut evaluation = format!("reward {}", v.reward);
            if let Some(refl) = &v.reflection {
                evaluation.push_str(&format!("; {refl}"));
            }
            self.emit(
                Agent::Orchestrator,
                EventBody::FigureStandin {
                    task_id: id,
                    stand_in: FigureStandIn {
                        reference: image.reference.clone(),
                        caption: v.caption,
                        evaluation,
                    },
                },
            )?;
        }
        Ok(decision)
    }
}
