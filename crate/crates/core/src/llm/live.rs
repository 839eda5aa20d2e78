use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Map, Value};

use super::{
    check_request, check_tool_closure, ChatMessage, ChatProvider, ContentPart, GenerationParams,
    ProviderError, ProviderResponse, Role, ToolCallRequest,
};
use crate::toolkit::ToolDescriptor;

/// Chat-completions client configured by endpoint and credential.
///
/// Transport failures (connection errors, 429, 5xx) are retried; any other
/// non-success status is a refusal and is not retried.
#[derive(Debug, Clone)]
pub struct LiveProvider {
    endpoint: String,
    key: Option<String>,
    model: String,
    max_attempts: u32,
    timeout: Duration,
}

impl LiveProvider {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            key,
            model: "default".into(),
            max_attempts: 3,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `PROVIDER_ENDPOINT`, `PROVIDER_KEY` and optionally `PROVIDER_MODEL`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("PROVIDER_ENDPOINT").ok()?;
        let mut provider = Self::new(endpoint, std::env::var("PROVIDER_KEY").ok());
        if let Ok(model) = std::env::var("PROVIDER_MODEL") {
            provider.model = model;
        }
        Some(provider)
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_max_attempts(mut self, attempts: u32) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    fn request_body(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDescriptor],
        params: &GenerationParams,
    ) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": messages.iter().map(wire_message).collect::<Vec<_>>(),
        });
        if !tools.is_empty() {
            body["tools"] = tools
                .iter()
                .map(|t| json!({"type": "function", "function": t.to_function_schema()}))
                .collect();
        }
        if let Some(t) = params.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(n) = params.max_output_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }
}

fn wire_message(message: &ChatMessage) -> Value {
    let role = match message.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let content: Value = if message.has_image() {
        message
            .parts
            .iter()
            .map(|part| match part {
                ContentPart::Text { text } => json!({"type": "text", "text": text}),
                ContentPart::Image { media_type, bytes } => {
                    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                    json!({"type": "image_url", "image_url": {"url": format!("data:{media_type};base64,{data}")}})
                }
            })
            .collect()
    } else {
        Value::String(message.text())
    };
    let mut wire = json!({"role": role, "content": content});
    if let Some(id) = &message.tool_call_id {
        wire["tool_call_id"] = json!(id);
    }
    if !message.tool_calls.is_empty() {
        wire["tool_calls"] = message
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": {"name": c.tool_name, "arguments": Value::Object(c.arguments.clone()).to_string()},
                })
            })
            .collect();
    }
    wire
}

pub(crate) fn parse_completion(body: &Value) -> Result<ProviderResponse, ProviderError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ProviderError::Protocol("response has no choices[0].message".into()))?;
    let text = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut tool_calls = Vec::new();
    for call in message
        .get("tool_calls")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        let id = call.get("id").and_then(Value::as_str).unwrap_or_default();
        let name = call
            .pointer("/function/name")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::Protocol("tool call without a function name".into()))?;
        let raw_args = call
            .pointer("/function/arguments")
            .and_then(Value::as_str)
            .unwrap_or("{}");
        let arguments: Map<String, Value> = serde_json::from_str(if raw_args.trim().is_empty() {
            "{}"
        } else {
            raw_args
        })
        .map_err(|e| {
            ProviderError::Protocol(format!("tool arguments are not a JSON object: {e}"))
        })?;
        tool_calls.push(ToolCallRequest {
            id: id.to_string(),
            tool_name: name.to_string(),
            arguments,
        });
    }
    Ok(ProviderResponse { text, tool_calls })
}

impl ChatProvider for LiveProvider {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDescriptor],
        params: &GenerationParams,
    ) -> Result<ProviderResponse, ProviderError> {
        check_request(messages)?;
        let body = self.request_body(messages, tools, params);
        // The blocking client owns a runtime; keep it scoped to this call.
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ProviderError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;

        let mut last_error = String::new();
        for attempt in 1..=self.max_attempts {
            let mut request = client.post(&self.endpoint).json(&body);
            if let Some(key) = &self.key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: Value = resp.json().map_err(|e| {
                            ProviderError::Protocol(format!("invalid JSON body: {e}"))
                        })?;
                        let response = parse_completion(&value)?;
                        check_tool_closure(&response, tools)?;
                        return Ok(response);
                    }
                    let text = resp.text().unwrap_or_default();
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_error = format!("HTTP {status}: {text}");
                    } else {
                        return Err(ProviderError::Refusal(format!("HTTP {status}: {text}")));
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
            if attempt < self.max_attempts {
                std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
            }
        }
        Err(ProviderError::Transport {
            attempts: self.max_attempts,
            message: last_error,
        })
    }
}
