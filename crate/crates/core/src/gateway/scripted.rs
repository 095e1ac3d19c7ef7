//! Deterministic transcript playback.
//!
//! A transcript maps `(role, step)` to a canned assistant message. `step` is
//! the zero-based index of the call among all calls made for that role in one
//! run; an entry without `step` matches any index not covered by an exact
//! entry. Example:
//!
//! ```json
//! {
//!   "name": "happy-path",
//!   "on_unmatched": "proceed",
//!   "responses": [
//!     { "role": "prep", "step": 0,
//!       "content": "Exploring the dataset and writing dataset.csv.",
//!       "tool_calls": [
//!         { "name": "tree", "args": { "path": "dataset", "max_depth": 2 } },
//!         { "name": "write_to_file",
//!           "args": { "path": "artifacts/make_csv.py", "content": "{{file:make_csv.py}}" } },
//!         { "name": "run_script", "args": { "path": "artifacts/make_csv.py" } }
//!       ],
//!       "usage": { "prompt_tokens": 812, "completion_tokens": 64 } }
//!   ]
//! }
//! ```
//!
//! String values may contain two kinds of placeholder:
//!
//! * `{{file:NAME}}` is replaced at load time by the contents of `NAME`,
//!   relative to the transcript file.
//! * `{{kb:ID}}` is replaced at call time by the body of the knowledge entry
//!   `ID` if that entry appears in the request's messages, and left verbatim
//!   otherwise. This lets a transcript depend on what the prompt actually
//!   contained.
//!
//! When `usage` is omitted it is computed as whitespace-delimited word counts:
//! prompt = words across all request messages, completion = words in the
//! response content plus its serialized tool arguments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{word_tokens, Backend, ChatMessage, Completion, CompletionRequest, GatewayError, TokenUsage, ToolCallRequest};
use crate::workspace::AgentId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unmatched {
    /// Reply with a plain "proceed" message and no tool calls.
    #[default]
    Proceed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedToolCall {
    pub name: String,
    #[serde(default)]
    pub args: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub on_unmatched: Unmatched,
    #[serde(default)]
    pub responses: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("transcript {}: {e}", path.display())))?;
        let mut t: Transcript = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("transcript {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for entry in &mut t.responses {
            entry.content = expand_files(&entry.content, &base)?;
            for call in &mut entry.tool_calls {
                expand_value(&mut call.args, &mut |s| expand_files(s, &base))?;
            }
        }
        Ok(t)
    }

    fn lookup(&self, role: AgentId, step: u64) -> Option<&TranscriptEntry> {
        self.responses
            .iter()
            .find(|e| e.role == role && e.step == Some(step))
            .or_else(|| self.responses.iter().find(|e| e.role == role && e.step.is_none()))
    }
}

fn expand_value(
    v: &mut Value,
    f: &mut dyn FnMut(&str) -> Result<String, GatewayError>,
) -> Result<(), GatewayError> {
    match v {
        Value::String(s) => *s = f(s)?,
        Value::Array(items) => {
            for item in items {
                expand_value(item, f)?;
            }
        }
        Value::Object(map) => {
            for item in map.values_mut() {
                expand_value(item, f)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Replace every `{{<kind>:<arg>}}` in `s` using `resolve`; a `None` leaves
/// the placeholder verbatim.
fn replace_placeholders(s: &str, kind: &str, mut resolve: impl FnMut(&str) -> Result<Option<String>, GatewayError>) -> Result<String, GatewayError> {
    let open = format!("{{{{{kind}:");
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find(&open) {
        let after = &rest[start + open.len()..];
        let Some(end) = after.find("}}") else { break };
        let arg = after[..end].trim();
        out.push_str(&rest[..start]);
        match resolve(arg)? {
            Some(text) => out.push_str(&text),
            None => out.push_str(&rest[start..start + open.len() + end + 2]),
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn expand_files(s: &str, base: &Path) -> Result<String, GatewayError> {
    replace_placeholders(s, "file", |name| {
        let path: PathBuf = base.join(name);
        std::fs::read_to_string(&path)
            .map(Some)
            .map_err(|e| GatewayError::Config(format!("transcript include {}: {e}", path.display())))
    })
}

/// Body of the knowledge block `id` inside `text`, as emitted by the agent
/// prompt builder (`<knowledge id="ID" ...>` ... `</knowledge>`).
fn find_knowledge(text: &str, id: &str) -> Option<String> {
    let marker = format!("<knowledge id=\"{id}\"");
    let start = text.find(&marker)?;
    let body_start = start + text[start..].find('\n')? + 1;
    let body_end = body_start + text[body_start..].find("</knowledge>")?;
    Some(text[body_start..body_end].trim_end_matches('\n').to_string() + "\n")
}

/// Expand `{{kb:ID}}` placeholders against knowledge blocks present in `messages`.
pub fn expand_knowledge_refs(s: &str, messages: &[ChatMessage]) -> String {
    replace_placeholders(s, "kb", |id| Ok(messages.iter().find_map(|m| find_knowledge(&m.content, id))))
        .expect("knowledge resolution is infallible")
}

pub struct ScriptedBackend {
    id: String,
    transcript: Transcript,
}

impl ScriptedBackend {
    pub fn new(transcript: Transcript) -> Self {
        let id = if transcript.name.is_empty() { "scripted".to_string() } else { format!("scripted:{}", transcript.name) };
        ScriptedBackend { id, transcript }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(Transcript::load(path)?))
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, GatewayError> {
        let (content, calls, usage) = match self.transcript.lookup(req.role, req.call_index) {
            Some(e) => (e.content.clone(), e.tool_calls.clone(), e.usage),
            None => match self.transcript.on_unmatched {
                Unmatched::Proceed => ("proceed".to_string(), Vec::new(), None),
                Unmatched::Error => return Err(GatewayError::NoTranscriptEntry { role: req.role, step: req.call_index }),
            },
        };
        let content = expand_knowledge_refs(&content, req.messages);
        let mut requests = Vec::with_capacity(calls.len());
        for (j, call) in calls.into_iter().enumerate() {
            let mut args = call.args;
            expand_value(&mut args, &mut |s| Ok(expand_knowledge_refs(s, req.messages)))?;
            requests.push(ToolCallRequest {
                id: format!("call_{}_{}_{}", req.role, req.call_index, j),
                name: call.name,
                arguments: args,
            });
        }
        let usage = usage.unwrap_or_else(|| {
            let prompt = req.messages.iter().map(|m| word_tokens(&m.content)).sum();
            let completion = word_tokens(&content)
                + requests
                    .iter()
                    .map(|r| word_tokens(&r.name) + word_tokens(&r.arguments.to_string()))
                    .sum::<u64>();
            TokenUsage::new(prompt, completion)
        });
        let mut message = ChatMessage::assistant(content);
        if !requests.is_empty() {
            message.tool_calls = Some(requests);
        }
        Ok(Completion { message, usage })
    }
}

/// Convenience for tests: a transcript entry with tool calls given as
/// `(name, args)` pairs.
pub fn entry(role: AgentId, step: Option<u64>, content: &str, calls: Vec<(&str, Value)>) -> TranscriptEntry {
    TranscriptEntry {
        role,
        step,
        content: content.to_string(),
        tool_calls: calls
            .into_iter()
            .map(|(name, args)| ScriptedToolCall { name: name.to_string(), args })
            .collect(),
        usage: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn req<'a>(role: AgentId, idx: u64, messages: &'a [ChatMessage]) -> CompletionRequest<'a> {
        CompletionRequest { role, call_index: idx, messages, tools: &[] }
    }

    #[test]
    fn playback_by_role_and_step() {
        let mut first = entry(AgentId::Prep, Some(0), "first", vec![]);
        first.usage = Some(TokenUsage::new(10, 5));
        let t = Transcript {
            name: "t".into(),
            on_unmatched: Unmatched::Error,
            responses: vec![first, entry(AgentId::Prep, Some(1), "second", vec![("tree", json!({"path": "."}))])],
        };
        let b = ScriptedBackend::new(t);
        let c0 = b.complete(&req(AgentId::Prep, 0, &[])).unwrap();
        assert_eq!(c0.message.content, "first");
        assert_eq!(c0.usage, TokenUsage::new(10, 5));
        let c1 = b.complete(&req(AgentId::Prep, 1, &[ChatMessage::user("one two three")])).unwrap();
        assert_eq!(c1.message.content, "second");
        let calls = c1.message.tool_calls.unwrap();
        assert_eq!(calls[0].name, "tree");
        assert_eq!(calls[0].id, "call_prep_1_0");
        // prompt: 3 words; completion: "second" + "tree" + {"path":"."}
        assert_eq!(c1.usage, TokenUsage::new(3, 3));
        assert!(matches!(
            b.complete(&req(AgentId::Prep, 2, &[])),
            Err(GatewayError::NoTranscriptEntry { role: AgentId::Prep, step: 2 })
        ));
    }

    #[test]
    fn unmatched_proceeds_and_wildcards() {
        let t = Transcript {
            name: String::new(),
            on_unmatched: Unmatched::Proceed,
            responses: vec![entry(AgentId::Loader, None, "any", vec![])],
        };
        let b = ScriptedBackend::new(t);
        assert_eq!(b.complete(&req(AgentId::Prep, 7, &[])).unwrap().message.content, "proceed");
        assert_eq!(b.complete(&req(AgentId::Loader, 42, &[])).unwrap().message.content, "any");
    }

    #[test]
    fn knowledge_placeholders() {
        let prompt = "intro\n<knowledge id=\"tpl\" kind=\"model_template\">\nprint('hi')\n</knowledge>\nend";
        let msgs = [ChatMessage::system(prompt)];
        assert_eq!(expand_knowledge_refs("x{{kb:tpl}}y", &msgs), "xprint('hi')\ny");
        assert_eq!(expand_knowledge_refs("{{kb:other}}", &msgs), "{{kb:other}}");
        assert_eq!(expand_knowledge_refs("{{kb:tpl}}", &[]), "{{kb:tpl}}");
    }

    #[test]
    fn file_includes_at_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("body.py"), "print(1)\n").unwrap();
        std::fs::write(
            dir.path().join("t.json"),
            r#"{"responses":[{"role":"prep","step":0,"tool_calls":[{"name":"write_to_file","args":{"path":"a.py","content":"{{file:body.py}}"}}]}]}"#,
        )
        .unwrap();
        let t = Transcript::load(&dir.path().join("t.json")).unwrap();
        assert_eq!(t.responses[0].tool_calls[0].args["content"], "print(1)\n");
        std::fs::write(
            dir.path().join("bad.json"),
            r#"{"responses":[{"role":"prep","content":"{{file:missing.txt}}"}]}"#,
        )
        .unwrap();
        assert!(matches!(Transcript::load(&dir.path().join("bad.json")), Err(GatewayError::Config(_))));
    }
}
