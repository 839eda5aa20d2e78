//! Provider-agnostic chat-completion boundary.
//!
//! Every agent turn goes through [`ChatProvider::complete`]. Two providers ship:
//! [`ScriptedProvider`], which replays a canned JSON-lines script, and
//! [`LiveProvider`], which speaks a chat-completions HTTP protocol.

mod live;
mod scripted;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::toolkit::ToolDescriptor;

pub use live::LiveProvider;
pub use scripted::{scripted_provider_load, Script, ScriptEntry, ScriptError, ScriptedProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image { media_type: String, bytes: Vec<u8> },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ContentPart::Text { text } => Some(text),
            ContentPart::Image { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
}

impl ChatMessage {
    fn plain(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            parts: vec![ContentPart::text(text)],
            tool_call_id: None,
            tool_calls: Vec::new(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::plain(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::plain(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>, tool_calls: Vec<ToolCallRequest>) -> Self {
        Self {
            tool_calls,
            ..Self::plain(Role::Assistant, text)
        }
    }

    pub fn tool(call_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(call_id.into()),
            ..Self::plain(Role::Tool, text)
        }
    }

    /// Concatenation of the text parts.
    pub fn text(&self) -> String {
        self.parts.iter().filter_map(ContentPart::as_text).collect()
    }

    pub fn has_image(&self) -> bool {
        self.parts
            .iter()
            .any(|p| matches!(p, ContentPart::Image { .. }))
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.parts.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "message has no content parts".into(),
            ));
        }
        if self.role == Role::System && self.has_image() {
            return Err(ProviderError::InvalidRequest(
                "system messages may contain text only".into(),
            ));
        }
        for part in &self.parts {
            if let ContentPart::Image { media_type, bytes } = part {
                if media_type.is_empty() || bytes.is_empty() {
                    return Err(ProviderError::InvalidRequest(
                        "image parts need a media type and non-empty bytes".into(),
                    ));
                }
            }
        }
        if (self.role == Role::Tool) != self.tool_call_id.is_some() {
            return Err(ProviderError::InvalidRequest(
                "tool_call_id is required on, and only on, tool messages".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub tool_calls: Vec<ToolCallRequest>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
}

impl GenerationParams {
    /// Evaluator turns run at temperature 0.
    pub fn evaluator() -> Self {
        Self {
            temperature: Some(0.0),
            max_output_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider refused the request: {0}")]
    Refusal(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("script exhausted at index {index}")]
    ScriptExhausted { index: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. })
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDescriptor],
        params: &GenerationParams,
    ) -> Result<ProviderResponse, ProviderError>;
}

/// Shared request preconditions: non-empty, system first, well-formed parts.
pub(crate) fn check_request(messages: &[ChatMessage]) -> Result<(), ProviderError> {
    let first = messages
        .first()
        .ok_or_else(|| ProviderError::InvalidRequest("message list is empty".into()))?;
    if first.role != Role::System {
        return Err(ProviderError::InvalidRequest(
            "first message must have role system".into(),
        ));
    }
    messages.iter().try_for_each(ChatMessage::validate)
}

/// Every returned tool call must name an offered tool.
pub(crate) fn check_tool_closure(
    response: &ProviderResponse,
    tools: &[ToolDescriptor],
) -> Result<(), ProviderError> {
    for call in &response.tool_calls {
        if !tools.iter().any(|t| t.name == call.tool_name) {
            return Err(ProviderError::Protocol(format!(
                "tool `{}` was not offered",
                call.tool_name
            )));
        }
    }
    if response.text.is_empty() && response.tool_calls.is_empty() {
        return Err(ProviderError::Protocol("empty response".into()));
    }
    Ok(())
}
