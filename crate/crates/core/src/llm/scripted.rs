use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{
    check_request, check_tool_closure, ChatMessage, ChatProvider, GenerationParams, ProviderError,
    ProviderResponse, ToolCallRequest,
};
use crate::toolkit::ToolDescriptor;

/// One canned response: text, a single tool call, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Map<String, Value>>,
}

impl ScriptEntry {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            tool: None,
            args: None,
        }
    }

    pub fn tool(text: impl Into<String>, tool: &str, args: Value) -> Self {
        let text = text.into();
        Self {
            text: (!text.is_empty()).then_some(text),
            tool: Some(tool.to_string()),
            args: args.as_object().cloned(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    /// Parses JSON-lines; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|e| ScriptError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if entry.text.is_none() && entry.tool.is_none() {
                return Err(ScriptError::Malformed {
                    line: i + 1,
                    message: "entry declares neither text nor tool".into(),
                });
            }
            if entry.args.is_some() && entry.tool.is_none() {
                return Err(ScriptError::Malformed {
                    line: i + 1,
                    message: "args given without a tool".into(),
                });
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replays script entries in order, one per `complete` call.
///
/// The response for call `i` depends only on entry `i`; tool-call ids are
/// `call_{i}` so replays are byte-stable.
#[derive(Debug)]
pub struct ScriptedProvider {
    script: Arc<Script>,
    cursor: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        Self::resume(Arc::new(script), 0)
    }

    pub fn resume(script: Arc<Script>, position: usize) -> Self {
        Self {
            script,
            cursor: Mutex::new(position),
        }
    }

    /// Index of the next entry to be served.
    pub fn position(&self) -> usize {
        *self.cursor.lock()
    }

    pub fn script(&self) -> &Arc<Script> {
        &self.script
    }
}

pub fn scripted_provider_load(path: &Path) -> Result<ScriptedProvider, ScriptError> {
    let text = std::fs::read_to_string(path)?;
    Ok(ScriptedProvider::new(Script::from_jsonl(&text)?))
}

impl ChatProvider for ScriptedProvider {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDescriptor],
        _params: &GenerationParams,
    ) -> Result<ProviderResponse, ProviderError> {
        check_request(messages)?;
        let index = {
            let mut cursor = self.cursor.lock();
            let index = *cursor;
            if index >= self.script.entries.len() {
                return Err(ProviderError::ScriptExhausted { index });
            }
            *cursor += 1;
            index
        };
        let entry = &self.script.entries[index];
        let tool_calls = entry
            .tool
            .iter()
            .map(|name| ToolCallRequest {
                id: format!("call_{index}"),
                tool_name: name.clone(),
                arguments: entry.args.clone().unwrap_or_default(),
            })
            .collect();
        let response = ProviderResponse {
            text: entry.text.clone().unwrap_or_default(),
            tool_calls,
        };
        check_tool_closure(&response, tools)?;
        Ok(response)
    }
}
