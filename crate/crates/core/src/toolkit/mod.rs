//! Tool registry and dispatch.
//!
//! Arguments are validated against a [`ToolDescriptor`] (defaults filled,
//! enumerations and bounds enforced) before any handler runs, and handler
//! failures, panics included, come back as `ok = false` results.

pub mod sandbox;
mod standard;

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::artifacts::ArtifactStore;
use crate::llm::ToolCallRequest;

pub use crate::table::{markdown_table, TableRender};
pub use sandbox::{
    sandbox_exec, ExecOutput, ProcessBackend, Runtime, SandboxBackend, SandboxError,
    SandboxProcess, SandboxSession, SandboxSessions, StubBackend,
};
pub use standard::{
    analytics_tools, database_descriptors, database_tools, delegation_tools, literature_tools,
    sandbox_descriptor, search_literature_descriptor, StandardTools, ANALYTICS_TOOLS,
    DATABASE_TOOLS, DELEGATION_TASK_DESCRIPTION, DELEGATION_TOOLS, LITERATURE_TOOLS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Boolean,
}

impl ParamType {
    fn json_name(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Boolean => "boolean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub param_type: ParamType,
    pub description: String,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimum: Option<i64>,
}

impl ParamSpec {
    pub fn required(name: &str, param_type: ParamType, description: &str) -> Self {
        Self {
            name: name.into(),
            param_type,
            description: description.into(),
            required: true,
            default: None,
            allowed: None,
            minimum: None,
        }
    }

    pub fn optional(name: &str, param_type: ParamType, description: &str, default: Value) -> Self {
        Self {
            required: false,
            default: Some(default),
            ..Self::required(name, param_type, description)
        }
    }

    pub fn one_of(mut self, allowed: &[&str]) -> Self {
        self.allowed = Some(allowed.iter().map(|s| json!(s)).collect());
        self
    }

    pub fn at_least(mut self, minimum: i64) -> Self {
        self.minimum = Some(minimum);
        self
    }

    fn check(&self, value: &Value) -> Result<(), String> {
        let type_ok = match self.param_type {
            ParamType::String => value.is_string(),
            ParamType::Integer => value.as_i64().is_some(),
            ParamType::Boolean => value.is_boolean(),
        };
        if !type_ok {
            return Err(format!(
                "expected {}, got {value}",
                self.param_type.json_name()
            ));
        }
        if let Some(allowed) = &self.allowed {
            if !allowed.contains(value) {
                let options: Vec<String> = allowed.iter().map(Value::to_string).collect();
                return Err(format!("{value} is not one of [{}]", options.join(", ")));
            }
        }
        if let (Some(min), Some(v)) = (self.minimum, value.as_i64()) {
            if v < min {
                return Err(format!("{v} is below the minimum {min}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParamSpec>,
}

impl ToolDescriptor {
    pub fn new(name: &str, description: &str) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            parameters: Vec::new(),
        }
    }

    pub fn param(mut self, spec: ParamSpec) -> Self {
        self.parameters.push(spec);
        self
    }

    /// Function-calling schema (name, description, JSON-schema parameters).
    pub fn to_function_schema(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for p in &self.parameters {
            let mut prop = json!({"type": p.param_type.json_name(), "description": p.description});
            if let Some(d) = &p.default {
                prop["default"] = d.clone();
            }
            if let Some(a) = &p.allowed {
                prop["enum"] = Value::Array(a.clone());
            }
            if let Some(m) = p.minimum {
                prop["minimum"] = json!(m);
            }
            properties.insert(p.name.clone(), prop);
            if p.required {
                required.push(json!(p.name));
            }
        }
        json!({
            "name": self.name,
            "description": self.description,
            "parameters": {"type": "object", "properties": properties, "required": required},
        })
    }

    /// Validates arguments and fills defaults.
    pub fn validate(
        &self,
        args: &Map<String, Value>,
    ) -> Result<Map<String, Value>, ValidationError> {
        for key in args.keys() {
            if !self.parameters.iter().any(|p| &p.name == key) {
                return Err(ValidationError {
                    tool: self.name.clone(),
                    parameter: key.clone(),
                    message: "unknown parameter".into(),
                });
            }
        }
        let mut out = Map::new();
        for p in &self.parameters {
            let value = match (args.get(&p.name), &p.default) {
                (Some(v), _) => v.clone(),
                (None, Some(d)) => d.clone(),
                (None, None) => {
                    return Err(ValidationError {
                        tool: self.name.clone(),
                        parameter: p.name.clone(),
                        message: "missing required parameter".into(),
                    })
                }
            };
            p.check(&value).map_err(|message| ValidationError {
                tool: self.name.clone(),
                parameter: p.name.clone(),
                message,
            })?;
            out.insert(p.name.clone(), value);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid argument `{parameter}` for tool `{tool}`: {message}")]
pub struct ValidationError {
    pub tool: String,
    pub parameter: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttachmentKind {
    File,
    Image,
}

/// A file produced by a tool, addressed by its name in the artifact store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub kind: AttachmentKind,
    pub reference: String,
    pub media_type: String,
}

/// What a handler returns on success.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolOutput {
    pub text: String,
    pub attachments: Vec<Attachment>,
}

impl ToolOutput {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            attachments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ToolResult {
    pub fn success(output: ToolOutput) -> Self {
        Self {
            text: output.text,
            attachments: output.attachments,
            ok: true,
            error: None,
        }
    }

    pub fn failure(text: impl Into<String>, error: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            attachments: Vec::new(),
            ok: false,
            error: Some(error.into()),
        }
    }

    pub fn images(&self) -> impl Iterator<Item = &Attachment> {
        self.attachments
            .iter()
            .filter(|a| a.kind == AttachmentKind::Image)
    }
}

/// Per-invocation state handed to handlers.
pub struct ToolContext<'a> {
    pub artifacts: &'a ArtifactStore,
    pub sandboxes: &'a mut SandboxSessions,
}

/// A handler failure; becomes an `ok = false` result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolFailure {
    /// Text shown to the agent alongside the error (e.g. partial stdout).
    pub text: String,
    pub error: String,
}

impl ToolFailure {
    pub fn new(error: impl fmt::Display) -> Self {
        Self {
            text: String::new(),
            error: error.to_string(),
        }
    }
}

pub type ToolHandler = Box<
    dyn Fn(&Map<String, Value>, &mut ToolContext<'_>) -> Result<ToolOutput, ToolFailure>
        + Send
        + Sync,
>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

struct Registered {
    descriptor: ToolDescriptor,
    handler: ToolHandler,
}

/// Tools by name, in registration order.
#[derive(Default)]
pub struct ToolRegistry {
    tools: Vec<Registered>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.tools.iter().map(|t| &t.descriptor.name))
            .finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        descriptor: ToolDescriptor,
        handler: ToolHandler,
    ) -> Result<(), RegistryError> {
        if self.get(&descriptor.name).is_some() {
            return Err(RegistryError::Duplicate(descriptor.name));
        }
        self.tools.push(Registered {
            descriptor,
            handler,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools
            .iter()
            .find(|t| t.descriptor.name == name)
            .map(|t| &t.descriptor)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools
            .iter()
            .map(|t| t.descriptor.name.as_str())
            .collect()
    }

    pub fn descriptors(&self) -> Vec<ToolDescriptor> {
        self.tools.iter().map(|t| t.descriptor.clone()).collect()
    }

    /// Descriptors for the named tools that are registered, in the given order.
    pub fn subset(&self, names: &[&str]) -> Vec<ToolDescriptor> {
        names.iter().filter_map(|n| self.get(n).cloned()).collect()
    }

    /// Validates and runs a call. Handler errors and panics become
    /// `ok = false` results; only unknown tools and invalid arguments are `Err`.
    pub fn dispatch(
        &self,
        call: &ToolCallRequest,
        ctx: &mut ToolContext<'_>,
    ) -> Result<ToolResult, DispatchError> {
        let tool = self
            .tools
            .iter()
            .find(|t| t.descriptor.name == call.tool_name)
            .ok_or_else(|| DispatchError::UnknownTool(call.tool_name.clone()))?;
        let args = tool.descriptor.validate(&call.arguments)?;
        let outcome = catch_unwind(AssertUnwindSafe(|| (tool.handler)(&args, ctx)));
        Ok(match outcome {
            Ok(Ok(output)) => ToolResult::success(output),
            Ok(Err(failure)) => ToolResult::failure(failure.text, failure.error),
            Err(panic) => {
                let message = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "handler panicked".into());
                ToolResult::failure("", format!("tool `{}` crashed: {message}", call.tool_name))
            }
        })
    }
}
