//! Chat-completion gateway: pluggable backends, call budget, retries, and
//! exact token accounting.

mod http;
mod scripted;
mod usage;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use scripted::{
    entry as transcript_entry, expand_knowledge_refs, ScriptedBackend, ScriptedToolCall, Transcript, TranscriptEntry, Unmatched,
};
pub use usage::{accumulate, Accumulated, TokenUsage};

use crate::tools::ToolDeclaration;
use crate::workspace::AgentId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no transcript entry for {role} step {step}")]
    NoTranscriptEntry { role: AgentId, step: u64 },
    #[error("gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A tool invocation requested by the model. `arguments` is kept as raw JSON
/// so that malformed requests reach the agent and can be reported back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCallRequest>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into(), tool_calls: None, tool_call_id: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into(), tool_calls: None, tool_call_id: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into(), tool_calls: None, tool_call_id: None }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Tool,
            content: content.into(),
            tool_calls: None,
            tool_call_id: Some(call_id.into()),
        }
    }

    /// `role=tool` requires a correlation id.
    pub fn is_well_formed(&self) -> bool {
        self.role != Role::Tool || self.tool_call_id.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub role: AgentId,
    /// Zero-based index of this call among the calls made for `role` in the run.
    pub call_index: u64,
    pub messages: &'a [ChatMessage],
    pub tools: &'a [ToolDeclaration],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub message: ChatMessage,
    pub usage: TokenUsage,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, GatewayError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Budget {
    pub max_calls: Option<u64>,
    pub deadline: Option<Instant>,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CallRecord {
    pub role: AgentId,
    pub call_index: u64,
    pub usage: TokenUsage,
}

/// Per-run gateway handle. The backend may be shared across runs; the
/// counters here are not.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    budget: Budget,
    retry: RetryPolicy,
    role_calls: [u64; 5],
    calls: Vec<CallRecord>,
    usage: TokenUsage,
    saturated: bool,
}

fn role_slot(role: AgentId) -> usize {
    match role {
        AgentId::Prep => 0,
        AgentId::Loader => 1,
        AgentId::Designer => 2,
        AgentId::Trainer => 3,
        AgentId::Manager => 4,
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, budget: Budget) -> Self {
        Gateway {
            backend,
            budget,
            retry: RetryPolicy::default(),
            role_calls: [0; 5],
            calls: Vec::new(),
            usage: TokenUsage::default(),
            saturated: false,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn check_budget(&self) -> Result<(), GatewayError> {
        if let Some(max) = self.budget.max_calls {
            if self.calls.len() as u64 >= max {
                return Err(GatewayError::BudgetExceeded(format!("call limit {max} reached")));
            }
        }
        if let Some(deadline) = self.budget.deadline {
            if Instant::now() >= deadline {
                return Err(GatewayError::BudgetExceeded("deadline passed".into()));
            }
        }
        Ok(())
    }

    /// One chat completion for `role`. The budget is checked before any
    /// backend activity; retryable transport failures are retried with
    /// exponential backoff up to the policy's attempt count.
    pub fn complete(
        &mut self,
        role: AgentId,
        messages: &[ChatMessage],
        tools: &[ToolDeclaration],
    ) -> Result<Completion, GatewayError> {
        self.check_budget()?;
        if let Some(bad) = messages.iter().find(|m| !m.is_well_formed()) {
            return Err(GatewayError::Config(format!("tool message without tool_call_id: {:?}", bad.content)));
        }
        let slot = role_slot(role);
        let req = CompletionRequest { role, call_index: self.role_calls[slot], messages, tools };
        let mut attempt = 0;
        let completion = loop {
            attempt += 1;
            match self.backend.complete(&req) {
                Ok(c) => break c,
                Err(GatewayError::Transport { message, retryable: true }) if attempt < self.retry.attempts => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt - 1);
                    tracing::warn!(%role, attempt, %message, "transport error; retrying in {:?}", delay);
                    if let Some(deadline) = self.budget.deadline {
                        if Instant::now() + delay >= deadline {
                            return Err(GatewayError::BudgetExceeded("deadline reached during retry".into()));
                        }
                    }
                    thread::sleep(delay);
                }
                Err(e) => return Err(e),
            }
        };
        if completion.message.role != Role::Assistant {
            return Err(GatewayError::MalformedResponse(format!(
                "expected assistant message, got {:?}",
                completion.message.role
            )));
        }
        self.role_calls[slot] += 1;
        self.calls.push(CallRecord { role, call_index: req.call_index, usage: completion.usage });
        let acc = accumulate(self.usage, completion.usage);
        self.usage = acc.usage;
        self.saturated |= acc.saturated;
        Ok(completion)
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    /// Running total over all successful calls.
    pub fn usage(&self) -> TokenUsage {
        self.usage
    }

    pub fn usage_saturated(&self) -> bool {
        self.saturated
    }

    pub fn calls_for(&self, role: AgentId) -> u64 {
        self.role_calls[role_slot(role)]
    }
}

/// Whitespace-delimited word count; the scripted backend's token estimate.
pub fn word_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
