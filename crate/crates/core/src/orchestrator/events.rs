//! The session event vocabulary. A session is nothing but its ordered list of
//! events; all other state is derived from it.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::evaluation::{EvaluationAttempt, EvaluationStage, GateDecision};
use crate::llm::ToolCallRequest;
use crate::toolkit::ToolResult;

pub type TaskId = u32;

/// Who authored an event or a piece of context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    User,
    ResearchManager,
    LiteratureSpecialist,
    DatabaseSpecialist,
    AnalyticsSpecialist,
    EvaluationSpecialist,
    Orchestrator,
}

impl Agent {
    pub const SPECIALISTS: [Agent; 3] = [
        Agent::LiteratureSpecialist,
        Agent::DatabaseSpecialist,
        Agent::AnalyticsSpecialist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Agent::User => "user",
            Agent::ResearchManager => "research_manager",
            Agent::LiteratureSpecialist => "literature_specialist",
            Agent::DatabaseSpecialist => "database_specialist",
            Agent::AnalyticsSpecialist => "analytics_specialist",
            Agent::EvaluationSpecialist => "evaluation_specialist",
            Agent::Orchestrator => "orchestrator",
        }
    }

    pub fn is_specialist(self) -> bool {
        Self::SPECIALISTS.contains(&self)
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Agent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Agent::User,
            Agent::ResearchManager,
            Agent::LiteratureSpecialist,
            Agent::DatabaseSpecialist,
            Agent::AnalyticsSpecialist,
            Agent::EvaluationSpecialist,
            Agent::Orchestrator,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| format!("unknown agent `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UserMessage,
    AgentMessage,
    Delegation,
    ToolCall,
    ToolResult,
    Evaluation,
    FigureStandin,
    Budget,
    Error,
    FinalAnswer,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::UserMessage => "user_message",
            EventKind::AgentMessage => "agent_message",
            EventKind::Delegation => "delegation",
            EventKind::ToolCall => "tool_call",
            EventKind::ToolResult => "tool_result",
            EventKind::Evaluation => "evaluation",
            EventKind::FigureStandin => "figure_standin",
            EventKind::Budget => "budget",
            EventKind::Error => "error",
            EventKind::FinalAnswer => "final_answer",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluator verdict, successful or not, with every raw attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub stage: EvaluationStage,
    /// The tool call being judged (tool and visual stages).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_id: Option<String>,
    /// The image artifact being judged (visual stage).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    /// Set on the verdict that decides a tool call's fate: the only one for
    /// plain results, the last one when a result carries several figures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: Vec<EvaluationAttempt>,
}

/// The text that stands in for a figure once it has been evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureStandIn {
    pub reference: String,
    pub caption: String,
    pub evaluation: String,
}

impl FigureStandIn {
    pub fn render(&self) -> String {
        format!(
            "[figure {}] Caption: {} Evaluation: {}",
            self.reference, self.caption, self.evaluation
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetChange {
    Extended,
    ExtensionDenied,
    Discrepancy,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub change: BudgetChange,
    pub remaining: u32,
    pub extensions_granted: u32,
    /// The agent's own `<count>` when it disagrees with ours.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Provider,
    EvaluationProtocol,
    DelegationCap,
    BacktrackLimit,
    Internal,
}

impl ErrorCode {
    /// Fatal errors end the user turn; the rest only fail their task.
    pub fn is_fatal(self) -> bool {
        !matches!(self, ErrorCode::BacktrackLimit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    UserMessage {
        text: String,
    },
    /// A provider response: manager turns have no task, specialist turns do.
    AgentMessage {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task_id: Option<TaskId>,
        text: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        tool_calls: Vec<ToolCallRequest>,
    },
    Delegation {
        task_id: TaskId,
        call_id: String,
        role: Agent,
        task: String,
        /// Initial step budget of the task.
        budget: u32,
    },
    ToolCall {
        task_id: TaskId,
        call: ToolCallRequest,
    },
    ToolResult {
        task_id: TaskId,
        call_id: String,
        tool_name: String,
        result: ToolResult,
    },
    Evaluation {
        task_id: TaskId,
        #[serde(flatten)]
        record: EvaluationRecord,
    },
    FigureStandin {
        task_id: TaskId,
        #[serde(flatten)]
        stand_in: FigureStandIn,
    },
    Budget {
        task_id: TaskId,
        #[serde(flatten)]
        record: BudgetRecord,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task_id: Option<TaskId>,
        #[serde(flatten)]
        error: ErrorRecord,
    },
    FinalAnswer {
        text: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::UserMessage { .. } => EventKind::UserMessage,
            EventBody::AgentMessage { .. } => EventKind::AgentMessage,
            EventBody::Delegation { .. } => EventKind::Delegation,
            EventBody::ToolCall { .. } => EventKind::ToolCall,
            EventBody::ToolResult { .. } => EventKind::ToolResult,
            EventBody::Evaluation { .. } => EventKind::Evaluation,
            EventBody::FigureStandin { .. } => EventKind::FigureStandin,
            EventBody::Budget { .. } => EventKind::Budget,
            EventBody::Error { .. } => EventKind::Error,
            EventBody::FinalAnswer { .. } => EventKind::FinalAnswer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub agent: Agent,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }

    /// The event as JSON with its timestamp removed, for replay comparisons.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("events serialize");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timestamp");
        }
        value.to_string()
    }
}

/// True when a turn's last event closes it.
pub fn ends_turn(event: &SessionEvent) -> bool {
    match &event.body {
        EventBody::FinalAnswer { .. } => true,
        EventBody::Error { error, .. } => error.code.is_fatal(),
        _ => false,
    }
}
