//! Per-run workspace: agent output slots, artifacts, system state, ledger.
//!
//! On-disk layout of one run:
//!
//! ```text
//! <run>/artifacts/        files produced by agents
//! <run>/ledger/steps.jsonl
//! <run>/state.json        snapshot rewritten after every mutation
//! <run>/task_card.json
//! <run>/dataset/          staged copy of the task's dataset (see stage_dataset)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gateway::TokenUsage;
use crate::ledger::{RecordKind, RunLedger};
use crate::task::TaskCard;
use crate::tools::normalize_relative;

pub const ARTIFACTS_DIR: &str = "artifacts";
pub const LEDGER_DIR: &str = "ledger";
pub const LEDGER_FILE: &str = "ledger/steps.jsonl";
pub const STATE_FILE: &str = "state.json";
pub const DATASET_DIR: &str = "dataset";

pub const DATASET_CSV: &str = "artifacts/dataset.csv";
pub const DATALOADER_PY: &str = "artifacts/Dataloader.py";
pub const MODEL_PY: &str = "artifacts/model.py";
pub const TRAIN_PY: &str = "artifacts/train.py";
pub const METRICS_JSON: &str = "artifacts/metrics.json";
pub const SCORES_CSV: &str = "artifacts/scores.csv";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace io: {0}")]
    Io(#[from] io::Error),
    #[error("artifact path escapes the workspace: {0}")]
    SandboxViolation(String),
    #[error("artifact not found on disk: {0}")]
    MissingArtifact(String),
    #[error("workspace state error: {0}")]
    State(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentId {
    Prep,
    Loader,
    Designer,
    Trainer,
    Manager,
}

impl AgentId {
    pub const WORKERS: [AgentId; 4] = [AgentId::Prep, AgentId::Loader, AgentId::Designer, AgentId::Trainer];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::Prep => "prep",
            AgentId::Loader => "loader",
            AgentId::Designer => "designer",
            AgentId::Trainer => "trainer",
            AgentId::Manager => "manager",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prep" => Some(AgentId::Prep),
            "loader" => Some(AgentId::Loader),
            "designer" => Some(AgentId::Designer),
            "trainer" => Some(AgentId::Trainer),
            "manager" => Some(AgentId::Manager),
            _ => None,
        }
    }

    pub fn stage(self) -> Option<Stage> {
        match self {
            AgentId::Prep => Some(Stage::Prep),
            AgentId::Loader => Some(Stage::Loader),
            AgentId::Designer => Some(Stage::Designer),
            AgentId::Trainer => Some(Stage::Trainer),
            AgentId::Manager => None,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prep,
    Loader,
    Designer,
    Trainer,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Prep, Stage::Loader, Stage::Designer, Stage::Trainer];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn agent(self) -> AgentId {
        AgentId::WORKERS[self.index()]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.agent().as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SystemState {
    Cont,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub agent_id: AgentId,
    pub summary: String,
    /// Workspace-relative paths.
    pub artifacts: Vec<String>,
    pub status: OutputStatus,
    pub produced_at_step: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub target: AgentId,
    pub message: String,
    pub failed_check: String,
    pub attempt: u32,
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[gate={}][attempt={}] {}", self.failed_check, self.attempt, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageState {
    Missing,
    Produced,
    Validated,
}

/// Outcome of one stage validation gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub pass: bool,
    /// Identifier of the first failing check, `None` on pass.
    pub failed_check: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub dispatches: u32,
    pub last_validation: Option<GateOutcome>,
    /// Step counter at the last validation.
    pub validated_at_step: Option<u64>,
    pub ever_passed: bool,
}

#[derive(Debug, Serialize)]
struct StateSnapshot<'a> {
    state: SystemState,
    step_counter: u64,
    slot_writes: u64,
    stages: [StageState; 4],
    stage_records: &'a [StageRecord; 4],
    slots: &'a BTreeMap<AgentId, AgentOutput>,
    halt_reason: &'a Option<String>,
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    card: TaskCard,
    slots: BTreeMap<AgentId, AgentOutput>,
    state: SystemState,
    step_counter: u64,
    slot_writes: u64,
    stages: [StageRecord; 4],
    halt_reason: Option<String>,
    ledger: RunLedger,
}

fn unique_run_dir(parent: &Path) -> io::Result<PathBuf> {
    let stamp = chrono::Utc::now().format("run-%Y%m%dT%H%M%S%.3fZ").to_string();
    for n in 0u32.. {
        let name = if n == 0 { stamp.clone() } else { format!("{stamp}-{n}") };
        let candidate = parent.join(name);
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("u32 range exhausted")
}

/// Create a fresh run directory under `root` and scaffold it. Existing runs
/// under the same root are left untouched.
pub fn init_workspace(card: &TaskCard, root: &Path) -> Result<Workspace, WorkspaceError> {
    fs::create_dir_all(root)?;
    let run = fs::canonicalize(unique_run_dir(root)?)?;
    fs::create_dir(run.join(ARTIFACTS_DIR))?;
    fs::create_dir(run.join(LEDGER_DIR))?;
    fs::write(run.join("task_card.json"), card.to_json_pretty())?;
    let ledger = RunLedger::create(&run.join(LEDGER_FILE))?;
    let w = Workspace {
        root: run,
        card: card.clone(),
        slots: BTreeMap::new(),
        state: SystemState::Cont,
        step_counter: 0,
        slot_writes: 0,
        stages: Default::default(),
        halt_reason: None,
        ledger,
    };
    w.persist()?;
    Ok(w)
}

impl Workspace {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn card(&self) -> &TaskCard {
        &self.card
    }

    pub fn state(&self) -> SystemState {
        self.state
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn slot_writes(&self) -> u64 {
        self.slot_writes
    }

    pub fn slot(&self, agent: AgentId) -> Option<&AgentOutput> {
        self.slots.get(&agent)
    }

    pub fn stage_record(&self, stage: Stage) -> &StageRecord {
        &self.stages[stage.index()]
    }

    pub fn halt_reason(&self) -> Option<&str> {
        self.halt_reason.as_deref()
    }

    pub fn ledger(&self) -> &RunLedger {
        &self.ledger
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn ensure_cont(&self) -> Result<(), WorkspaceError> {
        match self.state {
            SystemState::Cont => Ok(()),
            SystemState::End => Err(WorkspaceError::State("workspace is END".into())),
        }
    }

    /// Check that `rel` stays inside the workspace and exists on disk.
    fn check_artifact(&self, rel: &str) -> Result<(), WorkspaceError> {
        let norm = normalize_relative(rel).ok_or_else(|| WorkspaceError::SandboxViolation(rel.to_string()))?;
        let host = self.root.join(&norm);
        let canon = fs::canonicalize(&host).map_err(|_| WorkspaceError::MissingArtifact(rel.to_string()))?;
        if !canon.starts_with(&self.root) {
            return Err(WorkspaceError::SandboxViolation(rel.to_string()));
        }
        Ok(())
    }

    /// Write an agent output to its slot (`W.agent <- O`).
    pub fn record_output(&mut self, mut o: AgentOutput) -> Result<&AgentOutput, WorkspaceError> {
        self.ensure_cont()?;
        for a in &o.artifacts {
            self.check_artifact(a)?;
        }
        self.step_counter += 1;
        self.slot_writes += 1;
        o.produced_at_step = self.step_counter;
        let detail = json!({
            "summary": o.summary,
            "artifacts": o.artifacts,
            "status": o.status,
        });
        self.ledger
            .append(RecordKind::SlotWrite, Some(o.agent_id), self.step_counter, TokenUsage::default(), 0.0, detail)?;
        let agent = o.agent_id;
        self.slots.insert(agent, o);
        self.persist()?;
        Ok(&self.slots[&agent])
    }

    pub fn record_dispatch(&mut self, stage: Stage) -> Result<u32, WorkspaceError> {
        self.ensure_cont()?;
        let rec = &mut self.stages[stage.index()];
        rec.dispatches += 1;
        let n = rec.dispatches;
        self.persist()?;
        Ok(n)
    }

    pub fn record_validation(&mut self, stage: Stage, outcome: GateOutcome) -> Result<(), WorkspaceError> {
        self.ensure_cont()?;
        let detail = json!({
            "stage": stage,
            "pass": outcome.pass,
            "failed_check": outcome.failed_check,
            "message": outcome.message,
        });
        self.ledger
            .append(RecordKind::Validation, Some(stage.agent()), self.step_counter, TokenUsage::default(), 0.0, detail)?;
        let rec = &mut self.stages[stage.index()];
        rec.ever_passed |= outcome.pass;
        rec.last_validation = Some(outcome);
        rec.validated_at_step = Some(self.step_counter);
        self.persist()?;
        Ok(())
    }

    /// Append a ledger record that is not a slot write or validation.
    pub fn log(
        &mut self,
        kind: RecordKind,
        agent: Option<AgentId>,
        usage: TokenUsage,
        duration_ms: f64,
        detail: Value,
    ) -> Result<(), WorkspaceError> {
        self.ensure_cont()?;
        self.ledger.append(kind, agent, self.step_counter, usage, duration_ms, detail)?;
        Ok(())
    }

    /// Like [`Workspace::log`], stamped with the step currently being
    /// computed (the next slot write).
    pub fn log_in_step(
        &mut self,
        kind: RecordKind,
        agent: Option<AgentId>,
        usage: TokenUsage,
        duration_ms: f64,
        detail: Value,
    ) -> Result<(), WorkspaceError> {
        self.ensure_cont()?;
        self.ledger.append(kind, agent, self.step_counter + 1, usage, duration_ms, detail)?;
        Ok(())
    }

    /// Set the absorbing END state, logging why.
    pub fn end(&mut self, reason: &str, detail: Value) -> Result<(), WorkspaceError> {
        self.ensure_cont()?;
        self.ledger.append(
            RecordKind::Halt,
            Some(AgentId::Manager),
            self.step_counter,
            TokenUsage::default(),
            0.0,
            json!({"reason": reason, "detail": detail}),
        )?;
        self.state = SystemState::End;
        self.halt_reason = Some(reason.to_string());
        self.persist()?;
        Ok(())
    }

    pub fn stage_state(&self, stage: Stage) -> StageState {
        let Some(slot) = self.slots.get(&stage.agent()) else {
            return StageState::Missing;
        };
        let rec = &self.stages[stage.index()];
        match (&rec.last_validation, rec.validated_at_step) {
            (Some(v), Some(at)) if v.pass && at >= slot.produced_at_step => StageState::Validated,
            _ => StageState::Produced,
        }
    }

    pub fn stage_status(&self) -> [StageState; 4] {
        Stage::ALL.map(|s| self.stage_state(s))
    }

    fn persist(&self) -> io::Result<()> {
        let snap = StateSnapshot {
            state: self.state,
            step_counter: self.step_counter,
            slot_writes: self.slot_writes,
            stages: self.stage_status(),
            stage_records: &self.stages,
            slots: &self.slots,
            halt_reason: &self.halt_reason,
        };
        let tmp = self.root.join(".state.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&snap)?)?;
        fs::rename(tmp, self.root.join(STATE_FILE))
    }

    /// Make the dataset visible inside the workspace under `dataset/`.
    /// Files are hard-linked when possible and copied otherwise; symlinks in
    /// the source tree are skipped.
    pub fn stage_dataset(&mut self, src: &Path) -> Result<usize, WorkspaceError> {
        self.ensure_cont()?;
        let dst = self.root.join(DATASET_DIR);
        let n = link_tree(src, &dst)?;
        self.persist()?;
        Ok(n)
    }
}

fn link_tree(src: &Path, dst: &Path) -> io::Result<usize> {
    fs::create_dir_all(dst)?;
    let mut count = 0;
    let mut entries: Vec<_> = fs::read_dir(src)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let ft = entry.file_type()?;
        let target = dst.join(entry.file_name());
        if ft.is_dir() {
            count += link_tree(&entry.path(), &target)?;
        } else if ft.is_file() {
            if fs::hard_link(entry.path(), &target).is_err() {
                fs::copy(entry.path(), &target)?;
            }
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::parse_task_card;

    fn card() -> TaskCard {
        parse_task_card(r#"{"task_type":"classification","model":"m","datasets":{"root_path":"/tmp/x"}}"#).unwrap()
    }

    fn output(agent: AgentId, artifacts: &[&str]) -> AgentOutput {
        AgentOutput {
            agent_id: agent,
            summary: "s".into(),
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
            status: OutputStatus::Ok,
            produced_at_step: 0,
        }
    }

    #[test]
    fn fresh_workspace() {
        let dir = tempfile::tempdir().unwrap();
        let w = init_workspace(&card(), dir.path()).unwrap();
        assert_eq!(w.state(), SystemState::Cont);
        assert_eq!(w.step_counter(), 0);
        assert!(w.slots.is_empty());
        assert!(w.root().join("artifacts").is_dir());
        assert!(w.root().join("ledger").is_dir());
        assert!(w.root().join("state.json").is_file());
        assert_eq!(w.stage_status(), [StageState::Missing; 4]);
    }

    #[test]
    fn unwritable_root_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        fs::write(&file, "x").unwrap();
        assert!(matches!(init_workspace(&card(), &file.join("sub")), Err(WorkspaceError::Io(_))));
    }

    #[test]
    fn reinit_creates_new_run_dir() {
        let dir = tempfile::tempdir().unwrap();
        let first = init_workspace(&card(), dir.path()).unwrap();
        fs::write(first.path(DATASET_CSV), "keep").unwrap();
        let before: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        let second = init_workspace(&card(), dir.path()).unwrap();
        let mut after: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_ne!(first.root(), second.root());
        assert_eq!(before.len(), 1);
        assert_eq!(after.len(), 2);
        after.retain(|n| before.contains(n));
        assert_eq!(after, before);
        assert_eq!(fs::read_to_string(first.path(DATASET_CSV)).unwrap(), "keep");
    }

    #[test]
    fn record_output_sets_slot() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = init_workspace(&card(), dir.path()).unwrap();
        fs::write(w.path(DATASET_CSV), "image_path,split,label\n").unwrap();
        w.record_output(output(AgentId::Prep, &[DATASET_CSV])).unwrap();
        assert_eq!(w.slot(AgentId::Prep).unwrap().artifacts, vec![DATASET_CSV]);
        assert_eq!(w.step_counter(), 1);
        assert_eq!(w.stage_status()[0], StageState::Produced);
    }

    #[test]
    fn record_output_rejects_escape_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = init_workspace(&card(), dir.path()).unwrap();
        assert!(matches!(
            w.record_output(output(AgentId::Prep, &["../../etc/x"])),
            Err(WorkspaceError::SandboxViolation(_))
        ));
        assert!(matches!(
            w.record_output(output(AgentId::Prep, &["/etc/passwd"])),
            Err(WorkspaceError::SandboxViolation(_))
        ));
        assert!(matches!(
            w.record_output(output(AgentId::Prep, &["artifacts/nope.csv"])),
            Err(WorkspaceError::MissingArtifact(_))
        ));
        std::os::unix::fs::symlink("/etc/hostname", w.path("artifacts/link")).unwrap();
        assert!(matches!(
            w.record_output(output(AgentId::Prep, &["artifacts/link"])),
            Err(WorkspaceError::SandboxViolation(_))
        ));
        assert_eq!(w.step_counter(), 0);
    }

    #[test]
    fn second_record_replaces_slot_and_both_logged() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = init_workspace(&card(), dir.path()).unwrap();
        let mut a = output(AgentId::Prep, &[]);
        a.summary = "first".into();
        w.record_output(a).unwrap();
        let mut b = output(AgentId::Prep, &[]);
        b.summary = "second".into();
        w.record_output(b).unwrap();
        assert_eq!(w.slot(AgentId::Prep).unwrap().summary, "second");
        let writes = crate::ledger::read_ledger(&w.path(LEDGER_FILE)).unwrap();
        assert_eq!(writes.iter().filter(|r| r.kind == RecordKind::SlotWrite).count(), 2);
        assert_eq!(w.slot_writes(), 2);
    }

    #[test]
    fn end_is_absorbing() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = init_workspace(&card(), dir.path()).unwrap();
        w.end("done", Value::Null).unwrap();
        assert!(matches!(w.record_output(output(AgentId::Prep, &[])), Err(WorkspaceError::State(_))));
        assert!(matches!(w.end("again", Value::Null), Err(WorkspaceError::State(_))));
        assert!(matches!(w.record_dispatch(Stage::Prep), Err(WorkspaceError::State(_))));
        let snap: Value = serde_json::from_str(&fs::read_to_string(w.path(STATE_FILE)).unwrap()).unwrap();
        assert_eq!(snap["state"], "END");
    }

    #[test]
    fn stages_never_regress_to_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = init_workspace(&card(), dir.path()).unwrap();
        w.record_output(output(AgentId::Prep, &[])).unwrap();
        let pass = GateOutcome { pass: true, failed_check: None, message: "ok".into() };
        w.record_validation(Stage::Prep, pass.clone()).unwrap();
        assert_eq!(w.stage_status(), [StageState::Validated, StageState::Missing, StageState::Missing, StageState::Missing]);
        // A fresh output demotes to produced, never to missing.
        w.record_output(output(AgentId::Prep, &[])).unwrap();
        assert_eq!(w.stage_state(Stage::Prep), StageState::Produced);
        w.record_validation(Stage::Prep, pass).unwrap();
        assert_eq!(w.stage_state(Stage::Prep), StageState::Validated);
    }

    #[test]
    fn feedback_format() {
        let f = Feedback {
            target: AgentId::Prep,
            message: "dataset.csv missing label column".into(),
            failed_check: "csv_schema".into(),
            attempt: 2,
        };
        assert_eq!(f.to_string(), "[gate=csv_schema][attempt=2] dataset.csv missing label column");
    }
}
