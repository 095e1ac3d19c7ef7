//! The eight agent tools and their dispatch.

mod process;
mod sandbox;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use process::ScriptOutput;
pub use sandbox::{
    normalize_relative, DirEntry, EntryKind, FileContent, ReadOutcome, Sandbox, DEFAULT_MAX_READ_BYTES,
    DEFAULT_SCRIPT_TIMEOUT,
};

use crate::workspace::AgentId;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("sandbox violation: {0}")]
    SandboxViolation(String),
    #[error("{path} is {size} bytes, limit {limit}")]
    TooLarge { path: String, size: u64, limit: u64 },
    #[error("not a directory: {0}")]
    NotADirectory(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("script timed out after {:.2}s", .0.duration.as_secs_f64())]
    Timeout(Box<ScriptOutput>),
    #[error("spawn failed: {0}")]
    Spawn(String),
    #[error("bad arguments for {tool}: {message}")]
    BadArgs { tool: &'static str, message: String },
    #[error("tool `{tool}` is not allowed for agent {agent}")]
    NotAllowed { tool: String, agent: AgentId },
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
}

impl ToolError {
    /// Short machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            ToolError::NotFound(_) => "not_found",
            ToolError::SandboxViolation(_) => "sandbox_violation",
            ToolError::TooLarge { .. } => "too_large",
            ToolError::NotADirectory(_) => "not_a_directory",
            ToolError::Precondition(_) => "precondition",
            ToolError::Io(_) => "io",
            ToolError::Timeout(_) => "timeout",
            ToolError::Spawn(_) => "spawn",
            ToolError::BadArgs { .. } => "bad_args",
            ToolError::NotAllowed { .. } => "not_allowed",
            ToolError::UnknownTool(_) => "unknown_tool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    ListFiles,
    Tree,
    ReadFiles,
    PreviewFileContent,
    CreateDirectory,
    WriteToFile,
    CopyFile,
    RunScript,
}

impl ToolName {
    pub const ALL: [ToolName; 8] = [
        ToolName::ListFiles,
        ToolName::Tree,
        ToolName::ReadFiles,
        ToolName::PreviewFileContent,
        ToolName::CreateDirectory,
        ToolName::WriteToFile,
        ToolName::CopyFile,
        ToolName::RunScript,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::ListFiles => "list_files",
            ToolName::Tree => "tree",
            ToolName::ReadFiles => "read_files",
            ToolName::PreviewFileContent => "preview_file_content",
            ToolName::CreateDirectory => "create_directory",
            ToolName::WriteToFile => "write_to_file",
            ToolName::CopyFile => "copy_file",
            ToolName::RunScript => "run_script",
        }
    }

    pub fn declaration(self) -> ToolDeclaration {
        let p = |name: &'static str, kind: ParamKind, required: bool, description: &'static str| ParamDecl {
            name,
            kind,
            required,
            description,
        };
        let (description, params) = match self {
            ToolName::ListFiles => (
                "List the entries of a directory (name, kind, size) in lexicographic order.",
                vec![p("path", ParamKind::String, true, "Directory relative to the workspace root.")],
            ),
            ToolName::Tree => (
                "Render a depth-limited directory tree with a directory/file count.",
                vec![
                    p("path", ParamKind::String, true, "Directory relative to the workspace root."),
                    p("max_depth", ParamKind::Integer, false, "Maximum depth to descend (>= 1, default 3)."),
                ],
            ),
            ToolName::ReadFiles => (
                "Read the full contents of one or more files.",
                vec![p("paths", ParamKind::StringList, true, "Files relative to the workspace root.")],
            ),
            ToolName::PreviewFileContent => (
                "Show the first lines of a file.",
                vec![
                    p("path", ParamKind::String, true, "File relative to the workspace root."),
                    p("n_lines", ParamKind::Integer, false, "Number of lines (>= 1, default 20)."),
                ],
            ),
            ToolName::CreateDirectory => (
                "Create a directory and any missing parents. Succeeds if it already exists.",
                vec![p("path", ParamKind::String, true, "Directory relative to the workspace root.")],
            ),
            ToolName::WriteToFile => (
                "Write text to a file, replacing any previous content.",
                vec![
                    p("path", ParamKind::String, true, "File relative to the workspace root."),
                    p("content", ParamKind::String, true, "Complete new file content."),
                ],
            ),
            ToolName::CopyFile => (
                "Copy a file byte for byte.",
                vec![
                    p("src", ParamKind::String, true, "Source file relative to the workspace root."),
                    p("dst", ParamKind::String, true, "Destination relative to the workspace root."),
                ],
            ),
            ToolName::RunScript => (
                "Execute a python (.py) or shell (.sh) script from the workspace root.",
                vec![
                    p("path", ParamKind::String, true, "Script relative to the workspace root."),
                    p("args", ParamKind::StringList, false, "Command-line arguments."),
                    p("timeout", ParamKind::Number, false, "Timeout in seconds."),
                ],
            ),
        };
        ToolDeclaration { name: self, description, params }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ToolError::UnknownTool(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    StringList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamDecl {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
    pub description: &'static str,
}

/// Structured tool declaration published to the model gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolDeclaration {
    pub name: ToolName,
    pub description: &'static str,
    pub params: Vec<ParamDecl>,
}

impl ToolDeclaration {
    /// Chat-completions `tools[]` entry.
    pub fn to_function_json(&self) -> Value {
        let mut props = Map::new();
        for p in &self.params {
            let schema = match p.kind {
                ParamKind::String => json!({"type": "string", "description": p.description}),
                ParamKind::Integer => json!({"type": "integer", "description": p.description}),
                ParamKind::Number => json!({"type": "number", "description": p.description}),
                ParamKind::StringList => {
                    json!({"type": "array", "items": {"type": "string"}, "description": p.description})
                }
            };
            props.insert(p.name.to_string(), schema);
        }
        let required: Vec<&str> = self.params.iter().filter(|p| p.required).map(|p| p.name).collect();
        json!({
            "type": "function",
            "function": {
                "name": self.name.as_str(),
                "description": self.description,
                "parameters": {"type": "object", "properties": props, "required": required},
            }
        })
    }
}

pub fn declarations(allowed: &[ToolName]) -> Vec<ToolDeclaration> {
    allowed.iter().map(|t| t.declaration()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: ToolName,
    pub args: Map<String, Value>,
    pub issued_by: AgentId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolResult {
    pub ok: bool,
    pub payload: String,
    pub stderr: String,
    pub duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_class: Option<&'static str>,
    /// Workspace-relative paths this call created or replaced.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub written: Vec<String>,
}

impl ToolResult {
    fn success(payload: String, started: Instant) -> Self {
        ToolResult {
            ok: true,
            payload,
            stderr: String::new(),
            duration_s: started.elapsed().as_secs_f64(),
            exit_code: None,
            error_class: None,
            written: Vec::new(),
        }
    }

    pub fn failure(err: &ToolError, started: Instant) -> Self {
        let (payload, stderr, exit_code) = match err {
            ToolError::Timeout(out) => (out.stdout.clone(), format!("{}\n{err}", out.stderr), out.exit_code),
            _ => (String::new(), err.to_string(), None),
        };
        ToolResult {
            ok: false,
            payload,
            stderr,
            duration_s: started.elapsed().as_secs_f64(),
            exit_code,
            error_class: Some(err.class()),
            written: Vec::new(),
        }
    }

    /// Text shown to the model: payload and stderr, truncated to `budget` bytes.
    pub fn render_for_agent(&self, budget: usize) -> String {
        let mut text = if self.ok {
            self.payload.clone()
        } else {
            format!("ERROR ({}): {}", self.error_class.unwrap_or("failed"), self.stderr.trim_end())
        };
        if self.ok && !self.stderr.is_empty() {
            text.push_str("\n[stderr]\n");
            text.push_str(&self.stderr);
        }
        if let Some(code) = self.exit_code {
            text.push_str(&format!("\n[exit code {code}]"));
        }
        truncate_with_marker(&text, budget)
    }
}

/// Cut `text` to at most `budget` bytes (on a char boundary) and append a
/// marker naming how many bytes were dropped.
pub fn truncate_with_marker(text: &str, budget: usize) -> String {
    if text.len() <= budget {
        return text.to_string();
    }
    let mut cut = budget;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}\n...[truncated {} bytes]", &text[..cut], text.len() - cut)
}

fn arg_str<'a>(tool: ToolName, args: &'a Map<String, Value>, key: &str) -> Result<&'a str, ToolError> {
    match args.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(bad(tool, format!("`{key}` must be a string"))),
        None => Err(bad(tool, format!("missing `{key}`"))),
    }
}

fn arg_usize(tool: ToolName, args: &Map<String, Value>, key: &str, default: usize) -> Result<usize, ToolError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| bad(tool, format!("`{key}` must be a non-negative integer"))),
    }
}

fn arg_list(tool: ToolName, args: &Map<String, Value>, key: &str, required: bool) -> Result<Vec<String>, ToolError> {
    match args.get(key) {
        None | Some(Value::Null) if !required => Ok(Vec::new()),
        None | Some(Value::Null) => Err(bad(tool, format!("missing `{key}`"))),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| bad(tool, format!("`{key}` must contain only strings")))
            })
            .collect(),
        Some(_) => Err(bad(tool, format!("`{key}` must be an array of strings"))),
    }
}

fn bad(tool: ToolName, message: String) -> ToolError {
    ToolError::BadArgs { tool: tool.as_str(), message }
}

/// Execute one tool call against a sandbox. Errors become a failed
/// [`ToolResult`]; nothing is raised.
pub fn execute(sb: &Sandbox, call: &ToolCall) -> ToolResult {
    let started = Instant::now();
    match execute_inner(sb, call, started) {
        Ok(r) => r,
        Err(e) => ToolResult::failure(&e, started),
    }
}

fn execute_inner(sb: &Sandbox, call: &ToolCall, started: Instant) -> Result<ToolResult, ToolError> {
    let t = call.name;
    let args = &call.args;
    match t {
        ToolName::ListFiles => {
            let entries = sb.list_files(arg_str(t, args, "path")?)?;
            let lines: Vec<String> = entries
                .iter()
                .map(|e| match e.kind {
                    EntryKind::File => format!("{}\tfile\t{}", e.name, e.size),
                    EntryKind::Dir => format!("{}\tdir", e.name),
                    EntryKind::Symlink => format!("{}\tsymlink", e.name),
                    EntryKind::Other => format!("{}\tother", e.name),
                })
                .collect();
            Ok(ToolResult::success(lines.join("\n"), started))
        }
        ToolName::Tree => {
            let depth = arg_usize(t, args, "max_depth", 3)?;
            Ok(ToolResult::success(sb.tree(arg_str(t, args, "path")?, depth)?, started))
        }
        ToolName::ReadFiles => {
            let paths = arg_list(t, args, "paths", true)?;
            let mut text = String::new();
            let mut all_ok = true;
            let mut errors = String::new();
            for outcome in sb.read_files(&paths) {
                match outcome.result {
                    Ok(content) if content.binary => {
                        text.push_str(&format!("==> {} (binary, {} bytes)\n", outcome.path, content.bytes.len()));
                    }
                    Ok(content) => {
                        text.push_str(&format!("==> {}\n{}\n", outcome.path, content.text()));
                    }
                    Err(e) => {
                        all_ok = false;
                        text.push_str(&format!("==> {} ({})\n", outcome.path, e.class()));
                        errors.push_str(&format!("{}: {e}\n", outcome.path));
                    }
                }
            }
            let mut r = ToolResult::success(text, started);
            // Successful reads stay in the payload even when some paths fail.
            if !all_ok {
                r.ok = false;
                r.stderr = errors;
                r.error_class = Some("partial_read");
            }
            Ok(r)
        }
        ToolName::PreviewFileContent => {
            let n = arg_usize(t, args, "n_lines", 20)?;
            Ok(ToolResult::success(sb.preview_file_content(arg_str(t, args, "path")?, n)?, started))
        }
        ToolName::CreateDirectory => {
            let path = arg_str(t, args, "path")?;
            sb.create_directory(path)?;
            Ok(ToolResult::success(format!("created {path}"), started))
        }
        ToolName::WriteToFile => {
            let path = arg_str(t, args, "path")?;
            let content = arg_str(t, args, "content")?;
            sb.write_to_file(path, content.as_bytes())?;
            let mut r = ToolResult::success(format!("wrote {} bytes to {path}", content.len()), started);
            r.written.push(normalized(path));
            Ok(r)
        }
        ToolName::CopyFile => {
            let src = arg_str(t, args, "src")?;
            let dst = arg_str(t, args, "dst")?;
            sb.copy_file(src, dst)?;
            let mut r = ToolResult::success(format!("copied {src} -> {dst}"), started);
            r.written.push(normalized(dst));
            Ok(r)
        }
        ToolName::RunScript => {
            let path = arg_str(t, args, "path")?;
            let script_args = arg_list(t, args, "args", false)?;
            let timeout = match args.get("timeout") {
                None | Some(Value::Null) => sb.script_timeout,
                Some(v) => {
                    let secs = v
                        .as_f64()
                        .filter(|s| s.is_finite() && *s > 0.0)
                        .ok_or_else(|| bad(t, "`timeout` must be a positive number".into()))?;
                    Duration::from_secs_f64(secs).min(sb.script_timeout)
                }
            };
            let out = sb.run_script(path, &script_args, timeout)?;
            Ok(ToolResult {
                ok: out.exit_code == Some(0),
                payload: out.stdout,
                stderr: out.stderr,
                duration_s: out.duration.as_secs_f64(),
                exit_code: out.exit_code,
                error_class: if out.exit_code == Some(0) { None } else { Some("nonzero_exit") },
                written: Vec::new(),
            })
        }
    }
}

fn normalized(path: &str) -> String {
    normalize_relative(path)
        .map(|p| p.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}
