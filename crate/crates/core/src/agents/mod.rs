//! Worker agents: one gateway round-trip per step, tool execution, self-review
//! and the per-stage validation gates.

mod prompt;
mod validate;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::gateway::{ChatMessage, Gateway, GatewayError};
use crate::knowledge::KnowledgeStore;
use crate::ledger::RecordKind;
use crate::task::TaskCard;
use crate::tools::{self, declarations, ToolCall, ToolDeclaration, ToolError, ToolName, ToolResult};
use crate::workspace::{
    AgentId, AgentOutput, Feedback, OutputStatus, Workspace, WorkspaceError, DATALOADER_PY, DATASET_CSV, METRICS_JSON,
    MODEL_PY, TRAIN_PY,
};

pub use prompt::{knowledge_query, select_knowledge, system_prompt, task_prompt};
pub use validate::{check_artifact, validate_stage, DATASET_COLUMNS};
pub(crate) use validate::read_auroc;

pub const DEFAULT_MAX_INNER_ITERATIONS: u32 = 8;
/// Bytes of tool output shown to the model per call.
pub const DEFAULT_TOOL_OUTPUT_BUDGET: usize = 8 * 1024;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub agent_id: AgentId,
    pub goal_artifacts: Vec<&'static str>,
    pub allowed_tools: Vec<ToolName>,
    pub max_inner_iterations: u32,
}

impl AgentSpec {
    /// Registered spec for a worker; `None` for the manager.
    pub fn for_agent(agent: AgentId) -> Option<Self> {
        use ToolName::*;
        let (goal_artifacts, allowed_tools) = match agent {
            AgentId::Prep => (vec![DATASET_CSV], ToolName::ALL.to_vec()),
            AgentId::Loader => (
                vec![DATALOADER_PY],
                vec![ListFiles, Tree, ReadFiles, PreviewFileContent, CreateDirectory, WriteToFile, RunScript],
            ),
            AgentId::Designer => {
                (vec![MODEL_PY], vec![ListFiles, ReadFiles, PreviewFileContent, WriteToFile, RunScript])
            }
            AgentId::Trainer => (
                vec![TRAIN_PY, METRICS_JSON],
                vec![ListFiles, ReadFiles, PreviewFileContent, CreateDirectory, WriteToFile, RunScript],
            ),
            AgentId::Manager => return None,
        };
        Some(AgentSpec { agent_id: agent, goal_artifacts, allowed_tools, max_inner_iterations: DEFAULT_MAX_INNER_ITERATIONS })
    }

    pub fn with_max_inner_iterations(mut self, n: u32) -> Self {
        self.max_inner_iterations = n.max(1);
        self
    }

    pub fn tool_declarations(&self) -> Vec<ToolDeclaration> {
        declarations(&self.allowed_tools)
    }
}

/// Shared resources for one agent step.
pub struct AgentContext<'a> {
    pub gateway: &'a mut Gateway,
    pub sandbox: &'a tools::Sandbox,
    pub deadline: Option<Instant>,
    pub tool_output_budget: usize,
}

/// Conversation for one dispatch of one agent.
#[derive(Debug, Clone)]
pub struct Session {
    pub agent: AgentId,
    pub messages: Vec<ChatMessage>,
    /// Number of completed steps in this dispatch.
    pub iterations: u32,
    /// Ids of the knowledge entries injected into the system prompt.
    pub knowledge_ids: Vec<String>,
}

impl Session {
    pub fn start(
        spec: &AgentSpec,
        card: &TaskCard,
        feedback: Option<&Feedback>,
        knowledge: &KnowledgeStore,
        kb_limit: usize,
    ) -> Self {
        let entries = select_knowledge(knowledge, spec.agent_id, card, kb_limit);
        let knowledge_ids = entries.iter().map(|e| e.id.clone()).collect();
        let messages = vec![ChatMessage::system(system_prompt(spec, &entries)), ChatMessage::user(task_prompt(card, feedback))];
        Session { agent: spec.agent_id, messages, iterations: 0, knowledge_ids }
    }

    /// Ask the model to continue after a review that found work left.
    pub fn nudge(&mut self, reason: &str) {
        self.messages.push(ChatMessage::user(format!("Not done yet: {reason}. Continue.")));
    }
}

fn tool_log_args(args: &Map<String, Value>) -> Value {
    let mut out = Map::new();
    for (k, v) in args {
        let v = match v {
            Value::String(s) if s.len() > 160 => Value::String(format!("<{} bytes>", s.len())),
            other => other.clone(),
        };
        out.insert(k.clone(), v);
    }
    Value::Object(out)
}

fn remaining(deadline: Option<Instant>) -> Option<std::time::Duration> {
    deadline.map(|d| d.saturating_duration_since(Instant::now()))
}

/// One agent step: a gateway call followed by execution of the requested
/// tools. Tool failures are fed back to the conversation; only gateway and
/// workspace failures are returned as errors.
pub fn run_agent_step(
    spec: &AgentSpec,
    ws: &mut Workspace,
    session: &mut Session,
    ctx: &mut AgentContext<'_>,
) -> Result<AgentOutput, AgentError> {
    let started = Instant::now();
    let decls = spec.tool_declarations();
    let completion = ctx.gateway.complete(spec.agent_id, &session.messages, &decls)?;
    session.iterations += 1;
    let reply = completion.message.clone();
    session.messages.push(reply.clone());

    let mut written: Vec<String> = Vec::new();
    let mut malformed: Vec<String> = Vec::new();
    let mut n_failed = 0usize;
    let requests = reply.tool_calls.clone().unwrap_or_default();
    for req in &requests {
        let tool_started = Instant::now();
        let result = match parse_call(spec, &req.name, &req.arguments) {
            Ok(mut call) => {
                if call.name == ToolName::RunScript {
                    if let Some(left) = remaining(ctx.deadline) {
                        let asked = call.args.get("timeout").and_then(Value::as_f64).unwrap_or(f64::INFINITY);
                        let secs = asked.min(left.as_secs_f64()).max(0.001);
                        call.args.insert("timeout".into(), json!(secs));
                    }
                }
                tools::execute(ctx.sandbox, &call)
            }
            Err(e) => {
                if matches!(e, ToolError::BadArgs { .. }) {
                    malformed.push(e.to_string());
                }
                ToolResult::failure(&e, tool_started)
            }
        };
        if !result.ok {
            n_failed += 1;
        }
        written.extend(result.written.iter().cloned());
        let args_log = match &req.arguments {
            Value::Object(m) => tool_log_args(m),
            other => json!({ "raw": other.to_string().chars().take(160).collect::<String>() }),
        };
        ws.log_in_step(
            RecordKind::ToolCall,
            Some(spec.agent_id),
            Default::default(),
            result.duration_s * 1000.0,
            json!({
                "tool": req.name,
                "call_id": req.id,
                "args": args_log,
                "ok": result.ok,
                "error_class": result.error_class,
                "exit_code": result.exit_code,
                "written": result.written,
            }),
        )?;
        session.messages.push(ChatMessage::tool(req.id.clone(), result.render_for_agent(ctx.tool_output_budget)));
    }

    let mut artifacts: BTreeSet<String> = spec
        .goal_artifacts
        .iter()
        .filter(|a| ws.path(a).is_file())
        .map(|a| a.to_string())
        .collect();
    artifacts.extend(written.into_iter().filter(|w| ws.path(w).exists()));

    let status = if malformed.is_empty() { OutputStatus::Ok } else { OutputStatus::Failed };
    let mut summary: String = reply.content.chars().take(200).collect();
    if !requests.is_empty() {
        summary.push_str(&format!(" [{} tool calls, {} failed]", requests.len(), n_failed));
    }
    if !malformed.is_empty() {
        summary.push_str(&format!(" malformed tool arguments: {}", malformed.join("; ")));
    }

    ws.log_in_step(
        RecordKind::AgentStep,
        Some(spec.agent_id),
        completion.usage,
        started.elapsed().as_secs_f64() * 1000.0,
        json!({
            "iteration": session.iterations,
            "tool_calls": requests.len(),
            "failed_tool_calls": n_failed,
            "knowledge": session.knowledge_ids,
            "status": status,
        }),
    )?;

    Ok(AgentOutput {
        agent_id: spec.agent_id,
        summary,
        artifacts: artifacts.into_iter().collect(),
        status,
        produced_at_step: 0,
    })
}

fn parse_call(spec: &AgentSpec, name: &str, arguments: &Value) -> Result<ToolCall, ToolError> {
    let tool: ToolName = name.parse()?;
    if !spec.allowed_tools.contains(&tool) {
        tracing::warn!(agent = %spec.agent_id, tool = name, "refused disallowed tool");
        return Err(ToolError::NotAllowed { tool: name.to_string(), agent: spec.agent_id });
    }
    match arguments {
        Value::Object(m) => Ok(ToolCall { name: tool, args: m.clone(), issued_by: spec.agent_id }),
        Value::String(raw) => Err(ToolError::BadArgs { tool: tool.as_str(), message: format!("arguments are not a JSON object: {raw:?}") }),
        other => Err(ToolError::BadArgs { tool: tool.as_str(), message: format!("arguments must be an object, got {other}") }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewOutcome {
    /// `true`: iterate again.
    pub next: bool,
    /// The iteration cap forced completion with work left.
    pub capped: bool,
    pub reason: Option<String>,
}

/// Self-review. `next=false` once every goal artifact exists and passes its
/// syntactic check, or when `iterations` reaches the spec's cap.
pub fn review(spec: &AgentSpec, output: &AgentOutput, iterations: u32, root: &Path) -> ReviewOutcome {
    let problem = spec.goal_artifacts.iter().find_map(|a| {
        if !output.artifacts.iter().any(|x| x == a) && !root.join(a).is_file() {
            return Some(format!("{a} does not exist"));
        }
        check_artifact(root, a).err()
    });
    match problem {
        None => ReviewOutcome { next: false, capped: false, reason: None },
        Some(reason) if iterations >= spec.max_inner_iterations => {
            ReviewOutcome { next: false, capped: true, reason: Some(reason) }
        }
        Some(reason) => ReviewOutcome { next: true, capped: false, reason: Some(reason) },
    }
}

pub(crate) fn read_to_string_lossy(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| String::from_utf8_lossy(&b).into_owned())
}
