//! Context assembly: what each agent is shown on its next provider call.
//!
//! A specialist sees its system prompt, its task and its own transcript as
//! edited by the gate. The manager sees user turns, its own messages and, for
//! each delegation, the task outcome plus the specialist transcript with
//! reasoning removed. Figures never travel as bytes: their references are
//! replaced by stand-in text once evaluated.

use std::collections::BTreeMap;

use thiserror::Error;

use super::events::{Agent, EvaluationRecord, FigureStandIn, TaskId};
use super::state::{ManagerEntry, SessionState, TaskOutcome, TaskRecord, TranscriptEntry};
use super::system_prompt;
use crate::evaluation::EvaluationStage;
use crate::llm::{ChatMessage, ContentPart, Role};
use crate::tags::{parse_segments, serialize_without, SegmentKind};
use crate::toolkit::ToolResult;

/// Messages for one provider call, each tagged with the agent whose content
/// it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledContext {
    pub messages: Vec<ChatMessage>,
    pub authors: Vec<Agent>,
}

impl AssembledContext {
    fn push(&mut self, author: Agent, message: ChatMessage) {
        self.messages.push(message);
        self.authors.push(author);
    }

    /// Appends user text, merging with a directly preceding user message.
    fn push_user(&mut self, author: Agent, text: String) {
        if let Some(last) = self.messages.last_mut() {
            if last.role == Role::User && last.tool_call_id.is_none() {
                last.parts.push(ContentPart::text(format!("\n\n{text}")));
                return;
            }
        }
        self.push(author, ChatMessage::user(text));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("no task {0}")]
    UnknownTask(TaskId),
    #[error("task {task} belongs to {owner}, not {requested}")]
    WrongRole {
        task: TaskId,
        owner: Agent,
        requested: Agent,
    },
    #[error("{0} has no context of its own")]
    NoContext(Agent),
    #[error("a specialist context needs a task")]
    MissingTask,
}

/// Replaces `[image: name]` references with the figure's stand-in, when one
/// exists.
pub fn substitute_figures(text: &str, figures: &BTreeMap<String, FigureStandIn>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("[image: ") {
        let after = &rest[start + 8..];
        let Some(end) = after.find(']') else { break };
        let name = &after[..end];
        out.push_str(&rest[..start]);
        match figures.get(name) {
            Some(s) => out.push_str(&s.render()),
            None => out.push_str(&rest[start..start + 8 + end + 1]),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    out
}

pub fn render_tool_result(
    result: &ToolResult,
    figures: &BTreeMap<String, FigureStandIn>,
) -> String {
    let mut text = substitute_figures(&result.text, figures);
    if let Some(err) = result.error.as_deref().filter(|_| !result.ok) {
        if !text.contains(err) {
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str("Error: ");
            text.push_str(err);
        }
    }
    if text.is_empty() {
        text.push_str("(no output)");
    }
    text
}

fn render_evaluation(r: &EvaluationRecord) -> String {
    let stage = match r.stage {
        EvaluationStage::Tool => "tool",
        EvaluationStage::Visual => "visual",
        EvaluationStage::Task => "task",
    };
    let mut line = format!("[{stage} evaluation]");
    if let Some(reward) = r.reward {
        line.push_str(&format!(" reward {reward}"));
    }
    if let Some(c) = &r.caption {
        line.push_str(&format!("\nCaption: {c}"));
    }
    if let Some(refl) = &r.reflection {
        line.push_str(&format!("\nReflection: {refl}"));
    }
    if let Some(report) = &r.report {
        line.push_str(&format!("\nReport: {report}"));
    }
    if let Some(e) = &r.error {
        line.push_str(&format!("\nError: {e}"));
    }
    line
}

/// A task transcript as plain text. `redact` drops reasoning, which is what
/// the manager and evaluators other than the task evaluator see.
pub fn render_transcript(
    entries: &[TranscriptEntry],
    figures: &BTreeMap<String, FigureStandIn>,
    redact: bool,
) -> String {
    let mut blocks = Vec::new();
    for e in entries {
        blocks.push(match e {
            TranscriptEntry::Assistant { text, tool_calls } => {
                let body = if redact {
                    serialize_without(&parse_segments(text), &[SegmentKind::Thinking])
                } else {
                    text.clone()
                };
                let mut b = format!("[assistant] {}", body.trim());
                for c in tool_calls {
                    b.push_str(&format!(
                        "\n[call {}] {}",
                        c.tool_name,
                        serde_json::Value::Object(c.arguments.clone())
                    ));
                }
                b
            }
            TranscriptEntry::ToolResult {
                tool_name, result, ..
            } => {
                format!(
                    "[result {tool_name}] {}",
                    render_tool_result(result, figures)
                )
            }
            TranscriptEntry::Evaluation(r) => render_evaluation(r),
            TranscriptEntry::Feedback { text, .. } => format!("[feedback] {text}"),
        });
    }
    blocks.join("\n")
}

/// What the manager reads back for one delegation.
pub fn delegation_result(task: &TaskRecord, figures: &BTreeMap<String, FigureStandIn>) -> String {
    let head = match &task.outcome {
        Some(TaskOutcome::Completed { report, reward }) => format!(
            "Task {} ({}) completed with reward {reward}.\nReport:\n{report}",
            task.task_id, task.role
        ),
        Some(TaskOutcome::Failed { reason }) => {
            format!("Task {} ({}) failed: {reason}", task.task_id, task.role)
        }
        None => format!("Task {} ({}) did not finish.", task.task_id, task.role),
    };
    let transcript = render_transcript(&task.transcript, figures, true);
    if transcript.is_empty() {
        head
    } else {
        format!("{head}\n\nWorkflow:\n{transcript}")
    }
}

fn specialist_context(state: &SessionState, task: &TaskRecord) -> AssembledContext {
    let role = task.role;
    let mut ctx = AssembledContext {
        messages: Vec::new(),
        authors: Vec::new(),
    };
    ctx.push(
        Agent::Orchestrator,
        ChatMessage::system(system_prompt(role)),
    );
    ctx.push(Agent::ResearchManager, ChatMessage::user(task.task.clone()));
    for e in &task.transcript {
        match e {
            TranscriptEntry::Assistant { text, tool_calls } => {
                ctx.push(
                    role,
                    ChatMessage::assistant(text.clone(), tool_calls.clone()),
                );
            }
            TranscriptEntry::ToolResult {
                call_id, result, ..
            } => {
                ctx.push(
                    role,
                    ChatMessage::tool(call_id.clone(), render_tool_result(result, &state.figures)),
                );
            }
            TranscriptEntry::Evaluation(_) => {}
            TranscriptEntry::Feedback {
                call_id: Some(id),
                text,
            } => {
                let target = ctx
                    .messages
                    .iter_mut()
                    .rev()
                    .find(|m| m.tool_call_id.as_deref() == Some(id.as_str()));
                match target {
                    Some(m) => m.parts.push(ContentPart::text(format!("\n\n{text}"))),
                    None => ctx.push_user(Agent::EvaluationSpecialist, text.clone()),
                }
            }
            TranscriptEntry::Feedback {
                call_id: None,
                text,
            } => {
                ctx.push_user(Agent::EvaluationSpecialist, text.clone());
            }
        }
    }
    ctx
}

fn manager_context(state: &SessionState) -> AssembledContext {
    let mut ctx = AssembledContext {
        messages: Vec::new(),
        authors: Vec::new(),
    };
    ctx.push(
        Agent::Orchestrator,
        ChatMessage::system(system_prompt(Agent::ResearchManager)),
    );
    for entry in &state.manager {
        match entry {
            ManagerEntry::User { text } => ctx.push_user(Agent::User, text.clone()),
            ManagerEntry::Assistant { text, tool_calls } => {
                ctx.push(
                    Agent::ResearchManager,
                    ChatMessage::assistant(text.clone(), tool_calls.clone()),
                );
                for call in tool_calls {
                    match state.task_for_call(&call.id) {
                        Some(task) => ctx.push(
                            task.role,
                            ChatMessage::tool(
                                call.id.clone(),
                                delegation_result(task, &state.figures),
                            ),
                        ),
                        None => ctx.push(
                            Agent::Orchestrator,
                            ChatMessage::tool(call.id.clone(), "Delegation was not executed."),
                        ),
                    }
                }
            }
        }
    }
    ctx
}

/// The message list `agent` would be sent now. Specialists need the task.
pub fn assemble_context(
    state: &SessionState,
    agent: Agent,
    task: Option<TaskId>,
) -> Result<AssembledContext, ContextError> {
    match agent {
        Agent::ResearchManager => Ok(manager_context(state)),
        a if a.is_specialist() => {
            let id = task.ok_or(ContextError::MissingTask)?;
            let t = state.task(id).ok_or(ContextError::UnknownTask(id))?;
            if t.role != a {
                return Err(ContextError::WrongRole {
                    task: id,
                    owner: t.role,
                    requested: a,
                });
            }
            Ok(specialist_context(state, t))
        }
        other => Err(ContextError::NoContext(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_references_become_stand_ins() {
        let mut figs = BTreeMap::new();
        figs.insert(
            "a.png".to_string(),
            FigureStandIn {
                reference: "a.png".into(),
                caption: "Network".into(),
                evaluation: "reward 0.85".into(),
            },
        );
        let out = substitute_figures("ok\n[image: a.png]\n[image: b.png]\n", &figs);
        assert_eq!(
            out,
            "ok\n[figure a.png] Caption: Network Evaluation: reward 0.85\n[image: b.png]\n"
        );
        assert_eq!(
            substitute_figures("[image: unterminated", &figs),
            "[image: unterminated"
        );
    }
}
