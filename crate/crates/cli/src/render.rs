//! One-line terminal rendering of session events.

use copilot_core::orchestrator::{EventBody, SessionEvent};
use copilot_core::tags::{parse_segments, serialize_without, SegmentKind};

const WIDTH: usize = 400;

fn clip(text: &str) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(WIDTH) {
        Some((i, _)) => format!("{}...", &flat[..i]),
        None => flat,
    }
}

fn without_thinking(text: &str) -> String {
    serialize_without(&parse_segments(text), &[SegmentKind::Thinking])
}

pub fn event(e: &SessionEvent) -> String {
    let body = match &e.body {
        EventBody::UserMessage { text } => clip(text),
        EventBody::AgentMessage {
            text, tool_calls, ..
        } => {
            let calls: Vec<&str> = tool_calls.iter().map(|c| c.tool_name.as_str()).collect();
            let mut s = clip(&without_thinking(text));
            if !calls.is_empty() {
                s.push_str(&format!(" [calls {}]", calls.join(", ")));
            }
            s
        }
        EventBody::Delegation {
            task_id,
            role,
            task,
            budget,
            ..
        } => {
            format!("task {task_id} to {role} (budget {budget}): {}", clip(task))
        }
        EventBody::ToolCall { call, .. } => {
            format!(
                "{} {}",
                call.tool_name,
                clip(&serde_json::Value::Object(call.arguments.clone()).to_string())
            )
        }
        EventBody::ToolResult {
            tool_name, result, ..
        } => {
            let status = if result.ok { "ok" } else { "failed" };
            format!("{tool_name} {status}: {}", clip(&result.text))
        }
        EventBody::Evaluation { record, .. } => {
            let mut s = format!("{:?}", record.stage).to_lowercase();
            if let Some(r) = record.reward {
                s.push_str(&format!(" reward {r}"));
            }
            if let Some(g) = record.gate {
                s.push_str(&format!(" -> {g:?}").to_lowercase());
            }
            if let Some(e) = &record.error {
                s.push_str(&format!(" error: {}", clip(e)));
            }
            s
        }
        EventBody::FigureStandin { stand_in, .. } => clip(&stand_in.render()),
        EventBody::Budget { record, .. } => {
            format!("{:?}, {} steps left", record.change, record.remaining)
        }
        EventBody::Error { error, .. } => format!("{:?}: {}", error.code, clip(&error.message)),
        EventBody::FinalAnswer { text } => text.trim().to_string(),
    };
    format!("[{}] {} {}: {}", e.seq, e.agent, e.kind().as_str(), body)
}
