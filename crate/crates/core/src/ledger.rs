//! Append-only run ledger, persisted as `ledger/steps.jsonl`.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::TokenUsage;
use crate::workspace::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// One CALL of a worker agent (one gateway round trip).
    AgentStep,
    ToolCall,
    SlotWrite,
    Validation,
    Directive,
    Halt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub seq: u64,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentId>,
    /// Workspace step counter when the record was appended.
    pub step: u64,
    #[serde(default, skip_serializing_if = "TokenUsage::is_zero")]
    pub usage: TokenUsage,
    #[serde(default)]
    pub duration_ms: f64,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug)]
pub struct RunLedger {
    path: PathBuf,
    file: File,
    records: Vec<StepRecord>,
}

impl RunLedger {
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RunLedger { path: path.to_path_buf(), file, records: Vec::new() })
    }

    pub fn append(
        &mut self,
        kind: RecordKind,
        agent: Option<AgentId>,
        step: u64,
        usage: TokenUsage,
        duration_ms: f64,
        detail: Value,
    ) -> io::Result<&StepRecord> {
        let record = StepRecord {
            seq: self.records.len() as u64,
            kind,
            agent,
            step,
            usage,
            duration_ms,
            detail,
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    pub fn total_usage(&self) -> TokenUsage {
        self.records.iter().map(|r| r.usage).sum()
    }
}

/// Read a ledger file back.
pub fn read_ledger(path: &Path) -> io::Result<Vec<StepRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Ledger text with wall-clock fields zeroed. Two scripted runs over the same
/// transcript produce identical canonical text.
pub fn canonical_text(records: &[StepRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let mut r = r.clone();
        r.duration_ms = 0.0;
        strip_timing(&mut r.detail);
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for key in ["elapsed_s", "duration_s"] {
                if map.contains_key(key) {
                    map.insert(key.into(), Value::from(0));
                }
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
