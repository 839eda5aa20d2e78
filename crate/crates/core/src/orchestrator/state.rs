//! Session state as a fold over events. The live orchestrator and replay both
//! go through [`SessionState::apply`], so a replayed log yields exactly the
//! state the live run held.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::budget::{account_step, StepAccount, StepBudget};
use super::events::{
    Agent, BudgetChange, EvaluationRecord, EventBody, FigureStandIn, SessionEvent, TaskId,
};
use crate::evaluation::{EvaluationStage, GateDecision};
use crate::llm::ToolCallRequest;
use crate::tags::parse_segments;
use crate::toolkit::ToolResult;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {seq}: {message}")]
pub struct ReplayError {
    pub seq: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum ManagerEntry {
    User {
        text: String,
    },
    Assistant {
        text: String,
        tool_calls: Vec<ToolCallRequest>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Assistant {
        text: String,
        tool_calls: Vec<ToolCallRequest>,
    },
    ToolResult {
        call_id: String,
        tool_name: String,
        result: ToolResult,
    },
    Evaluation(EvaluationRecord),
    /// Gate feedback: tool-role when tied to a call (adjust), user-role
    /// otherwise (backtrack).
    Feedback {
        call_id: Option<String>,
        text: String,
    },
}

impl TranscriptEntry {
    pub fn label(&self) -> &'static str {
        match self {
            TranscriptEntry::Assistant { .. } => "assistant",
            TranscriptEntry::ToolResult { .. } => "tool_result",
            TranscriptEntry::Evaluation(r) => match r.stage {
                EvaluationStage::Task => "task_evaluation",
                EvaluationStage::Visual => "visual_evaluation",
                EvaluationStage::Tool => "tool_evaluation",
            },
            TranscriptEntry::Feedback { .. } => "feedback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskOutcome {
    Completed { report: String, reward: f64 },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub role: Agent,
    pub task: String,
    /// The manager's delegation call this task answers.
    pub call_id: String,
    pub transcript: Vec<TranscriptEntry>,
    pub budget: StepBudget,
    pub backtracks: u32,
    pub outcome: Option<TaskOutcome>,
    #[serde(skip)]
    pub last_account: StepAccount,
}

impl TaskRecord {
    pub fn is_open(&self) -> bool {
        self.outcome.is_none()
    }

    fn last_assistant(&self) -> Option<usize> {
        self.transcript
            .iter()
            .rposition(|e| matches!(e, TranscriptEntry::Assistant { .. }))
    }

    /// Evaluations of `call_id` since the latest assistant message.
    fn evaluations_of(&self, call_id: &str) -> Vec<&EvaluationRecord> {
        let start = self.last_assistant().unwrap_or(0);
        self.transcript[start..]
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::Evaluation(r) if r.call_id.as_deref() == Some(call_id) => Some(r),
                _ => None,
            })
            .collect()
    }
}

fn gate_feedback(decision: GateDecision, evals: &[&EvaluationRecord], tools: &str) -> String {
    let reward = evals
        .iter()
        .filter_map(|e| e.reward)
        .fold(f64::INFINITY, f64::min);
    let reflections: Vec<&str> = evals
        .iter()
        .filter_map(|e| e.reflection.as_deref())
        .collect();
    let mut text = match decision {
        GateDecision::Backtrack => format!(
            "Your previous action ({tools}) was discarded after evaluation (reward {reward:.2}). Try a different approach."
        ),
        _ => format!("Evaluation: reward {reward:.2}. Consider minor adjustments."),
    };
    if !reflections.is_empty() {
        text.push_str("\nReflection: ");
        text.push_str(&reflections.join("\n"));
    }
    text
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    next_seq: u64,
    pub manager: Vec<ManagerEntry>,
    pub tasks: Vec<TaskRecord>,
    pub figures: BTreeMap<String, FigureStandIn>,
    pub turn_open: bool,
    pub delegations_this_turn: u32,
    /// Provider responses consumed so far, agent turns and evaluator attempts.
    pub provider_calls: usize,
    pub final_answers: Vec<String>,
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replay<'a>(
        events: impl IntoIterator<Item = &'a SessionEvent>,
    ) -> Result<Self, ReplayError> {
        let mut state = Self::new();
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskRecord> {
        self.tasks.get(id as usize)
    }

    pub fn task_for_call(&self, call_id: &str) -> Option<&TaskRecord> {
        self.tasks.iter().find(|t| t.call_id == call_id)
    }

    fn open_task(&mut self, seq: u64, id: TaskId) -> Result<&mut TaskRecord, ReplayError> {
        match self.tasks.get_mut(id as usize) {
            Some(t) if t.is_open() => Ok(t),
            Some(_) => Err(ReplayError {
                seq,
                message: format!("task {id} is already finished"),
            }),
            None => Err(ReplayError {
                seq,
                message: format!("unknown task {id}"),
            }),
        }
    }

    fn close_open_tasks(&mut self, reason: &str) {
        for t in self.tasks.iter_mut().filter(|t| t.is_open()) {
            t.outcome = Some(TaskOutcome::Failed {
                reason: reason.to_string(),
            });
        }
    }

    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), ReplayError> {
        let seq = event.seq;
        if seq != self.next_seq {
            return Err(ReplayError {
                seq,
                message: format!("expected seq {}", self.next_seq),
            });
        }
        let fail = |message: String| Err(ReplayError { seq, message });
        match &event.body {
            EventBody::UserMessage { text } => {
                if self.turn_open {
                    self.close_open_tasks("turn interrupted");
                }
                self.turn_open = true;
                self.delegations_this_turn = 0;
                self.manager.push(ManagerEntry::User { text: text.clone() });
            }
            EventBody::AgentMessage {
                task_id: None,
                text,
                tool_calls,
            } => {
                if !self.turn_open {
                    return fail("manager message outside a turn".into());
                }
                self.provider_calls += 1;
                self.manager.push(ManagerEntry::Assistant {
                    text: text.clone(),
                    tool_calls: tool_calls.clone(),
                });
            }
            EventBody::AgentMessage {
                task_id: Some(id),
                text,
                tool_calls,
            } => {
                let task = self.open_task(seq, *id)?;
                if task.role != event.agent {
                    return fail(format!(
                        "task {id} belongs to {}, not {}",
                        task.role, event.agent
                    ));
                }
                let (budget, account) = account_step(
                    task.budget,
                    text,
                    &parse_segments(text),
                    !tool_calls.is_empty(),
                );
                task.budget = budget;
                task.last_account = account;
                task.transcript.push(TranscriptEntry::Assistant {
                    text: text.clone(),
                    tool_calls: tool_calls.clone(),
                });
                self.provider_calls += 1;
            }
            EventBody::Delegation {
                task_id,
                call_id,
                role,
                task,
                budget,
            } => {
                if *task_id as usize != self.tasks.len() {
                    return fail(format!("task ids must be sequential, got {task_id}"));
                }
                if !role.is_specialist() {
                    return fail(format!("cannot delegate to {role}"));
                }
                self.delegations_this_turn += 1;
                self.tasks.push(TaskRecord {
                    task_id: *task_id,
                    role: *role,
                    task: task.clone(),
                    call_id: call_id.clone(),
                    transcript: Vec::new(),
                    budget: StepBudget::new(*budget),
                    backtracks: 0,
                    outcome: None,
                    last_account: StepAccount::default(),
                });
            }
            EventBody::ToolCall { task_id, call } => {
                let task = self.open_task(seq, *task_id)?;
                let requested = task
                    .last_assistant()
                    .is_some_and(|i| match &task.transcript[i] {
                        TranscriptEntry::Assistant { tool_calls, .. } => {
                            tool_calls.iter().any(|c| c.id == call.id)
                        }
                        _ => false,
                    });
                if !requested {
                    return fail(format!("tool call {} was not requested", call.id));
                }
            }
            EventBody::ToolResult {
                task_id,
                call_id,
                tool_name,
                result,
            } => {
                self.open_task(seq, *task_id)?
                    .transcript
                    .push(TranscriptEntry::ToolResult {
                        call_id: call_id.clone(),
                        tool_name: tool_name.clone(),
                        result: result.clone(),
                    });
            }
            EventBody::Evaluation { task_id, record } => {
                self.provider_calls += record.attempts.len();
                let task = self.open_task(seq, *task_id)?;
                task.transcript
                    .push(TranscriptEntry::Evaluation(record.clone()));
                if record.stage == EvaluationStage::Task {
                    if let (Some(report), Some(reward)) = (&record.report, record.reward) {
                        task.outcome = Some(TaskOutcome::Completed {
                            report: report.clone(),
                            reward,
                        });
                    }
                    return self.advance(seq);
                }
                let (Some(decision), Some(call_id)) = (record.gate, record.call_id.as_deref())
                else {
                    return self.advance(seq);
                };
                let evals = task.evaluations_of(call_id);
                match decision {
                    GateDecision::Continue => {}
                    GateDecision::Adjust => {
                        let text = gate_feedback(decision, &evals, "");
                        task.transcript.push(TranscriptEntry::Feedback {
                            call_id: Some(call_id.to_string()),
                            text,
                        });
                    }
                    GateDecision::Backtrack => {
                        let at = task.last_assistant().unwrap_or(0);
                        let tools = match &task.transcript[at] {
                            TranscriptEntry::Assistant { tool_calls, .. } => tool_calls
                                .iter()
                                .map(|c| c.tool_name.as_str())
                                .collect::<Vec<_>>()
                                .join(", "),
                            _ => String::new(),
                        };
                        let text = gate_feedback(decision, &evals, &tools);
                        task.transcript.truncate(at);
                        task.backtracks += 1;
                        task.transcript.push(TranscriptEntry::Feedback {
                            call_id: None,
                            text,
                        });
                    }
                }
            }
            EventBody::FigureStandin { stand_in, .. } => {
                self.figures
                    .insert(stand_in.reference.clone(), stand_in.clone());
            }
            EventBody::Budget { task_id, record } => {
                let task = self.open_task(seq, *task_id)?;
                if record.change == BudgetChange::Exhausted {
                    if let Some(i) = task.last_assistant() {
                        if let TranscriptEntry::Assistant { tool_calls, .. } =
                            &mut task.transcript[i]
                        {
                            tool_calls.clear();
                        }
                    }
                    task.outcome = Some(TaskOutcome::Failed {
                        reason: "step budget exhausted".into(),
                    });
                }
            }
            EventBody::Error { task_id, error } => {
                if let Some(id) = task_id {
                    if let Some(t) = self.tasks.get_mut(*id as usize).filter(|t| t.is_open()) {
                        t.outcome = Some(TaskOutcome::Failed {
                            reason: error.message.clone(),
                        });
                    }
                }
                if error.code.is_fatal() {
                    self.close_open_tasks(&error.message);
                    self.turn_open = false;
                }
            }
            EventBody::FinalAnswer { text } => {
                if !self.turn_open {
                    return fail("final answer outside a turn".into());
                }
                self.final_answers.push(text.clone());
                self.turn_open = false;
            }
        }
        self.advance(seq)
    }

    fn advance(&mut self, seq: u64) -> Result<(), ReplayError> {
        self.next_seq = seq + 1;
        Ok(())
    }
}
