//! The manager loop: dispatch workers, validate what they produce, feed
//! failures back, and decide when the run ends.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::json;

use crate::agents::{
    self, review, run_agent_step, validate_stage, AgentContext, AgentError, AgentSpec, Session,
    DEFAULT_MAX_INNER_ITERATIONS, DEFAULT_TOOL_OUTPUT_BUDGET,
};
use crate::bench::TaskReport;
use crate::gateway::{Backend, Budget, ChatMessage, Gateway, GatewayError};
use crate::knowledge::KnowledgeStore;
use crate::ledger::RecordKind;
use crate::task::TaskCard;
use crate::tools::Sandbox;
use crate::workspace::{
    init_workspace, AgentId, Feedback, OutputStatus, Stage, StageState, SystemState, Workspace,
};
use crate::Error;

pub const DEFAULT_MAX_STEPS: u64 = 100;
pub const DEFAULT_TIME_CAP: Duration = Duration::from_secs(600);
pub const HIGH_COST_TIME_CAP: Duration = Duration::from_secs(300);
pub const DEFAULT_ATTEMPT_CAP: u32 = 3;
/// A step is not started with less than this left before the time cap.
pub const MIN_STEP_BUDGET: Duration = Duration::from_millis(10);

/// Backend ids matching any of these get the shorter time cap.
pub const HIGH_COST_PATTERNS: [&str; 3] = ["claude", "sonnet", "qwen-max"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunLimits {
    pub max_steps: u64,
    pub time_cap: Duration,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { max_steps: DEFAULT_MAX_STEPS, time_cap: DEFAULT_TIME_CAP }
    }
}

impl RunLimits {
    pub fn for_backend(id: &str) -> Self {
        let id = id.to_ascii_lowercase();
        let time_cap = if HIGH_COST_PATTERNS.iter().any(|p| id.contains(p)) { HIGH_COST_TIME_CAP } else { DEFAULT_TIME_CAP };
        RunLimits { max_steps: DEFAULT_MAX_STEPS, time_cap }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub inner_cap: u32,
    /// Dispatches per stage before the run halts; `None` disables the cap.
    pub attempt_cap: Option<u32>,
    /// One pass over the stages with no re-dispatch.
    pub no_manager: bool,
    /// Consult the backend (role `manager`) before each directive. The
    /// deterministic schedule still decides; disagreements are logged.
    pub llm_manager: bool,
    pub kb_limit: usize,
    pub knowledge: Arc<KnowledgeStore>,
    pub tool_output_budget: usize,
    pub python: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inner_cap: DEFAULT_MAX_INNER_ITERATIONS,
            attempt_cap: Some(DEFAULT_ATTEMPT_CAP),
            no_manager: false,
            llm_manager: false,
            kb_limit: 3,
            knowledge: Arc::new(KnowledgeStore::bundled()),
            tool_output_budget: DEFAULT_TOOL_OUTPUT_BUDGET,
            python: None,
        }
    }
}

impl PipelineConfig {
    /// Same config with an empty knowledge store.
    pub fn without_knowledge(mut self) -> Self {
        self.knowledge = Arc::new(KnowledgeStore::empty());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Directive {
    pub next_agent: Option<AgentId>,
    pub feedback: Option<Feedback>,
    pub state: SystemState,
}

/// Deterministic schedule: the earliest stage that is not validated. A
/// stage that was produced but failed its gate gets the gate's verdict as
/// feedback.
pub fn schedule(ws: &Workspace) -> Directive {
    let Some(stage) = Stage::ALL.into_iter().find(|s| ws.stage_state(*s) != StageState::Validated) else {
        return Directive { next_agent: None, feedback: None, state: SystemState::End };
    };
    let rec = ws.stage_record(stage);
    let feedback = match (&rec.last_validation, ws.stage_state(stage)) {
        (Some(v), StageState::Produced) if !v.pass => Some(Feedback {
            target: stage.agent(),
            message: v.message.clone(),
            failed_check: v.failed_check.clone().unwrap_or_else(|| "unknown".into()),
            attempt: rec.dispatches + 1,
        }),
        _ => None,
    };
    Directive { next_agent: Some(stage.agent()), feedback, state: SystemState::Cont }
}

pub fn map_agent(agent: AgentId, inner_cap: u32) -> Result<AgentSpec, Error> {
    AgentSpec::for_agent(agent)
        .map(|s| s.with_max_inner_iterations(inner_cap))
        .ok_or_else(|| Error::Config(format!("no worker spec for agent `{agent}`")))
}

/// Why a dispatch stopped early.
enum Halt {
    MaxSteps,
    TimeCap,
    Gateway(GatewayError),
}

impl Halt {
    fn reason(&self) -> &'static str {
        match self {
            Halt::MaxSteps => "max_steps",
            Halt::TimeCap => "time_cap",
            Halt::Gateway(GatewayError::BudgetExceeded(_)) => "time_cap",
            Halt::Gateway(_) => "gateway_error",
        }
    }
}

struct Run<'a> {
    ws: Workspace,
    gateway: Gateway,
    sandbox: Sandbox,
    limits: RunLimits,
    config: &'a PipelineConfig,
    started: Instant,
    deadline: Instant,
}

impl Run<'_> {
    fn cap_hit(&self) -> Option<Halt> {
        if self.ws.step_counter() >= self.limits.max_steps {
            Some(Halt::MaxSteps)
        } else if Instant::now() + MIN_STEP_BUDGET > self.deadline {
            Some(Halt::TimeCap)
        } else {
            None
        }
    }

    /// Run one dispatch of `stage`'s agent until self-review says it is done.
    fn dispatch(&mut self, stage: Stage, feedback: Option<&Feedback>) -> Result<Option<Halt>, Error> {
        let spec = map_agent(stage.agent(), self.config.inner_cap)?;
        self.ws.record_dispatch(stage)?;
        let mut session = Session::start(&spec, self.ws.card(), feedback, &self.config.knowledge, self.config.kb_limit);
        loop {
            if let Some(h) = self.cap_hit() {
                return Ok(Some(h));
            }
            let mut ctx = AgentContext {
                gateway: &mut self.gateway,
                sandbox: &self.sandbox,
                deadline: Some(self.deadline),
                tool_output_budget: self.config.tool_output_budget,
            };
            let mut output = match run_agent_step(&spec, &mut self.ws, &mut session, &mut ctx) {
                Ok(o) => o,
                Err(AgentError::Gateway(e)) => return Ok(Some(Halt::Gateway(e))),
                Err(AgentError::Workspace(e)) => return Err(e.into()),
            };
            let verdict = review(&spec, &output, session.iterations, self.ws.root());
            if verdict.capped {
                output.status = OutputStatus::Failed;
                output.summary.push_str(&format!(
                    " [inner cap {} reached: {}]",
                    spec.max_inner_iterations,
                    verdict.reason.as_deref().unwrap_or("")
                ));
            }
            self.ws.record_output(output)?;
            if !verdict.next {
                return Ok(None);
            }
            session.nudge(verdict.reason.as_deref().unwrap_or("goal artifacts incomplete"));
        }
    }

    fn validate(&mut self, stage: Stage) -> Result<(), Error> {
        let outcome = validate_stage(stage, &self.sandbox, Some(self.deadline));
        tracing::info!(%stage, pass = outcome.pass, check = ?outcome.failed_check, "{}", outcome.message);
        self.ws.record_validation(stage, outcome)?;
        Ok(())
    }

    fn halt(&mut self, reason: &str, message: Option<String>) -> Result<(), Error> {
        let detail = json!({
            "elapsed_s": self.started.elapsed().as_secs_f64(),
            "steps": self.ws.step_counter(),
            "stages": self.ws.stage_status(),
            "message": message,
        });
        self.ws.end(reason, detail)?;
        Ok(())
    }

    fn halt_with(&mut self, h: Halt) -> Result<(), Error> {
        let msg = match &h {
            Halt::Gateway(e) => Some(e.to_string()),
            _ => None,
        };
        self.halt(h.reason(), msg)
    }

    /// One manager call whose answer is compared with the schedule.
    fn consult(&mut self, d: &Directive) -> Result<Option<Halt>, Error> {
        let status: Vec<String> =
            Stage::ALL.iter().map(|s| format!("{s}: {:?}", self.ws.stage_state(*s)).to_lowercase()).collect();
        let messages = [
            ChatMessage::system(
                "You coordinate four worker agents (prep, loader, designer, trainer). \
                 Reply with the name of the agent to run next, or `end`.",
            ),
            ChatMessage::user(format!("Stage status: {}.", status.join(", "))),
        ];
        let started = Instant::now();
        let completion = match self.gateway.complete(AgentId::Manager, &messages, &[]) {
            Ok(c) => c,
            Err(e) => return Ok(Some(Halt::Gateway(e))),
        };
        let answer = completion.message.content.to_lowercase();
        let suggested = AgentId::WORKERS.into_iter().find(|a| answer.contains(a.as_str()));
        let agrees = suggested == d.next_agent || (d.next_agent.is_none() && answer.contains("end"));
        if !agrees {
            tracing::warn!(?suggested, scheduled = ?d.next_agent, "manager model disagrees with the schedule");
        }
        self.ws.log(
            RecordKind::Directive,
            Some(AgentId::Manager),
            completion.usage,
            started.elapsed().as_secs_f64() * 1000.0,
            json!({"consulted": true, "suggested": suggested, "scheduled": d.next_agent, "agrees": agrees}),
        )?;
        Ok(None)
    }

    fn log_directive(&mut self, d: &Directive) -> Result<(), Error> {
        self.ws.log(
            RecordKind::Directive,
            Some(AgentId::Manager),
            Default::default(),
            0.0,
            json!({"next_agent": d.next_agent, "feedback": d.feedback, "state": d.state}),
        )?;
        Ok(())
    }

    fn managed(&mut self) -> Result<(), Error> {
        loop {
            let d = schedule(&self.ws);
            if d.state == SystemState::End {
                self.log_directive(&d)?;
                return self.halt("complete", None);
            }
            if let Some(h) = self.cap_hit() {
                return self.halt_with(h);
            }
            if self.config.llm_manager {
                if let Some(h) = self.consult(&d)? {
                    return self.halt_with(h);
                }
            }
            let agent = d.next_agent.expect("CONT directive names an agent");
            let stage = agent.stage().expect("workers map to stages");
            if let Some(cap) = self.config.attempt_cap {
                let n = self.ws.stage_record(stage).dispatches;
                if n >= cap {
                    let msg = format!("{stage} failed validation after {n} dispatches");
                    return self.halt("attempt_cap", Some(msg));
                }
            }
            self.log_directive(&d)?;
            if let Some(h) = self.dispatch(stage, d.feedback.as_ref())? {
                return self.halt_with(h);
            }
            self.validate(stage)?;
        }
    }

    fn single_pass(&mut self) -> Result<(), Error> {
        for stage in Stage::ALL {
            let d = Directive { next_agent: Some(stage.agent()), feedback: None, state: SystemState::Cont };
            self.log_directive(&d)?;
            if let Some(h) = self.dispatch(stage, None)? {
                return self.halt_with(h);
            }
            // Validation is for reporting only; nothing is re-dispatched.
            self.validate(stage)?;
        }
        self.halt("pipeline_complete", None)
    }
}

/// Run the whole pipeline for one task card. The run directory is created
/// under `out_root`. Cap hits are normal outcomes recorded in the report;
/// only setup and workspace failures are errors.
pub fn run_pipeline(
    card: &TaskCard,
    limits: RunLimits,
    config: &PipelineConfig,
    backend: Arc<dyn Backend>,
    out_root: &Path,
) -> Result<(Workspace, TaskReport), Error> {
    if !card.dataset_root.is_dir() {
        return Err(Error::Precondition(format!("dataset root {} is not a directory", card.dataset_root.display())));
    }
    let started = Instant::now();
    let deadline = started + limits.time_cap;
    let mut ws = init_workspace(card, out_root)?;
    ws.stage_dataset(&card.dataset_root)?;
    let mut sandbox = Sandbox::new(ws.root())?.with_script_timeout(limits.time_cap);
    if let Some(py) = &config.python {
        sandbox = sandbox.with_python(py);
    }
    let gateway = Gateway::new(backend, Budget { max_calls: None, deadline: Some(deadline) });
    let mut run = Run { ws, gateway, sandbox, limits, config, started, deadline };
    if config.no_manager {
        run.single_pass()?;
    } else {
        run.managed()?;
    }

    let Run { ws, gateway, .. } = run;
    let trainer = ws.stage_record(Stage::Trainer);
    let stage_success = ws.stage_status().map(|s| s == StageState::Validated);
    let auroc = if stage_success[3] { agents::read_auroc(ws.root()) } else { None };
    let auroc_nan = trainer
        .last_validation
        .as_ref()
        .and_then(|v| v.failed_check.as_deref())
        .is_some_and(|c| c == "auroc_not_finite");
    let report = TaskReport {
        task_name: card.category(),
        stage_success,
        elapsed_s: started.elapsed().as_secs_f64(),
        usage: gateway.usage(),
        auroc,
        auroc_nan,
        halt_reason: ws.halt_reason().map(str::to_string),
        steps: ws.step_counter(),
    };
    std::fs::write(ws.root().join("report.json"), serde_json::to_vec_pretty(&report).map_err(std::io::Error::from)?)?;
    Ok((ws, report))
}
