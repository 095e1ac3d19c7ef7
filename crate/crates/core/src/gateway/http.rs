//! OpenAI-compatible `/chat/completions` backend.

use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Backend, ChatMessage, Completion, CompletionRequest, GatewayError, Role, TokenUsage, ToolCallRequest};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct HttpConfig {
    /// e.g. `https://api.example.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_key_env() -> String {
    "AUTOIAD_API_KEY".into()
}

fn default_timeout_s() -> u64 {
    120
}

pub struct HttpBackend {
    id: String,
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { id: format!("live:{}", config.model), config, api_key, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn request_body(&self, req: &CompletionRequest<'_>) -> Value {
        let messages: Vec<Value> = req.messages.iter().map(message_json).collect();
        let mut body = json!({ "model": self.config.model, "messages": messages });
        if !req.tools.is_empty() {
            body["tools"] = Value::Array(req.tools.iter().map(|t| t.to_function_json()).collect());
        }
        body
    }
}

fn message_json(m: &ChatMessage) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({ "role": role, "content": m.content });
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = Value::String(id.clone());
    }
    if let Some(calls) = &m.tool_calls {
        v["tool_calls"] = calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments.to_string() },
                })
            })
            .collect();
    }
    v
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Option<Vec<WireToolCall>>,
}

#[derive(Deserialize)]
struct WireToolCall {
    id: String,
    function: WireFunction,
}

#[derive(Deserialize)]
struct WireFunction {
    name: String,
    #[serde(default)]
    arguments: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Decode a chat-completions response body.
pub(crate) fn decode_response(text: &str) -> Result<Completion, GatewayError> {
    let wire: WireResponse =
        serde_json::from_str(text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
    let mut message = ChatMessage::assistant(choice.message.content.unwrap_or_default());
    if let Some(calls) = choice.message.tool_calls.filter(|c| !c.is_empty()) {
        message.tool_calls = Some(
            calls
                .into_iter()
                .map(|c| ToolCallRequest {
                    id: c.id,
                    name: c.function.name,
                    // Unparseable arguments are passed through as a string and
                    // rejected later by the tool layer.
                    arguments: serde_json::from_str(&c.function.arguments)
                        .unwrap_or(Value::String(c.function.arguments)),
                })
                .collect(),
        );
    }
    let usage = match wire.usage {
        Some(u) => TokenUsage::new(u.prompt_tokens, u.completion_tokens),
        None => {
            tracing::warn!("response carried no usage block; counting zero tokens");
            TokenUsage::default()
        }
    };
    Ok(Completion { message, usage })
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, GatewayError> {
        let mut request = self.agent.post(&self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(self.request_body(req)).map_err(|e| GatewayError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| GatewayError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        if status == 429 || status >= 500 {
            return Err(GatewayError::Transport { message: format!("HTTP {status}: {text}"), retryable: true });
        }
        if status >= 400 {
            return Err(GatewayError::Transport { message: format!("HTTP {status}: {text}"), retryable: false });
        }
        decode_response(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_tool_calls_and_usage() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":null,
            "tool_calls":[{"id":"c1","type":"function","function":{"name":"tree","arguments":"{\"path\":\".\"}"}},
                          {"id":"c2","type":"function","function":{"name":"tree","arguments":"{oops"}}]}}],
            "usage":{"prompt_tokens":10,"completion_tokens":5,"total_tokens":15}}"#;
        let c = decode_response(body).unwrap();
        assert_eq!(c.usage, TokenUsage::new(10, 5));
        let calls = c.message.tool_calls.unwrap();
        assert_eq!(calls[0].arguments, json!({"path": "."}));
        assert_eq!(calls[1].arguments, Value::String("{oops".into()));
    }

    #[test]
    fn malformed_bodies() {
        assert!(matches!(decode_response("not json"), Err(GatewayError::MalformedResponse(_))));
        assert!(matches!(decode_response(r#"{"choices":[]}"#), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn tool_messages_serialize_with_correlation() {
        let mut m = ChatMessage::assistant("");
        m.tool_calls = Some(vec![ToolCallRequest { id: "c1".into(), name: "tree".into(), arguments: json!({"path": "."}) }]);
        let v = message_json(&m);
        assert_eq!(v["tool_calls"][0]["function"]["arguments"], "{\"path\":\".\"}");
        let t = message_json(&ChatMessage::tool("c1", "out"));
        assert_eq!(t["tool_call_id"], "c1");
        assert_eq!(t["role"], "tool");
    }
}
