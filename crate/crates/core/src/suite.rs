//! Running many tasks, each in its own workspace.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::json;

use crate::bench::TaskReport;
use crate::gateway::{Backend, HttpBackend, HttpConfig, ScriptedBackend};
use crate::knowledge::{load_knowledge, KnowledgeStore};
use crate::manager::{run_pipeline, DEFAULT_ATTEMPT_CAP, PipelineConfig, RunLimits};
use crate::task::{load_task_card, parse_task_card, TaskCard};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskSpec {
    Card(PathBuf),
    /// A category directory under [`SuiteConfig::dataset_root`].
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendConfig {
    /// A transcript file, or a directory holding `<category>.json` with
    /// `default.json` as fallback.
    Scripted { transcripts: PathBuf },
    Live(HttpConfig),
}

impl BackendConfig {
    pub fn id(&self) -> String {
        match self {
            BackendConfig::Scripted { .. } => "scripted".into(),
            BackendConfig::Live(c) => format!("live:{}", c.model),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub tasks: Vec<TaskSpec>,
    pub dataset_root: PathBuf,
    /// Model named in task cards built from category names.
    pub model: String,
    pub backend: BackendConfig,
    /// `None` picks the per-backend default.
    pub limits: Option<RunLimits>,
    pub kb_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub no_manager: bool,
    pub no_knowledge: bool,
    pub workers: usize,
    /// Dispatches per stage; `None` disables the cap.
    pub attempt_cap: Option<u32>,
    pub python: Option<PathBuf>,
}

impl SuiteConfig {
    pub fn new(tasks: Vec<TaskSpec>, backend: BackendConfig, output_dir: impl Into<PathBuf>) -> Self {
        SuiteConfig {
            tasks,
            dataset_root: PathBuf::from("."),
            model: "autoencoder".into(),
            backend,
            limits: None,
            kb_dir: None,
            output_dir: output_dir.into(),
            no_manager: false,
            no_knowledge: false,
            workers: 1,
            attempt_cap: Some(DEFAULT_ATTEMPT_CAP),
            python: None,
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, Error> {
        let knowledge = if self.no_knowledge {
            KnowledgeStore::empty()
        } else if let Some(dir) = &self.kb_dir {
            let store = load_knowledge(dir)?;
            for w in &store.warnings {
                tracing::warn!("knowledge: {w}");
            }
            store
        } else {
            KnowledgeStore::bundled()
        };
        Ok(PipelineConfig {
            no_manager: self.no_manager,
            attempt_cap: self.attempt_cap,
            knowledge: Arc::new(knowledge),
            python: self.python.clone(),
            ..PipelineConfig::default()
        })
    }
}

/// Card for a synthetic category under `dataset_root`.
pub fn category_card(dataset_root: &Path, category: &str, model: &str) -> Result<TaskCard, Error> {
    let card = json!({
        "query": format!("Build an image-level anomaly detector for the `{category}` category and report AUROC."),
        "task_type": "classification",
        "model": model,
        "metric": "auroc",
        "datasets": {"name": "synth", "root_path": dataset_root.join(category)},
        "category": category,
    });
    Ok(parse_task_card(&card.to_string())?)
}

/// Transcript for `category`: the file itself, or `<category>.json` then
/// `default.json` inside a directory.
pub fn transcript_path(transcripts: &Path, category: &str) -> Result<PathBuf, Error> {
    if transcripts.is_file() {
        return Ok(transcripts.to_path_buf());
    }
    if !transcripts.is_dir() {
        return Err(Error::Config(format!("transcripts {} not found", transcripts.display())));
    }
    for name in [format!("{category}.json"), "default.json".to_string()] {
        let p = transcripts.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Config(format!("no transcript for `{category}` in {} (and no default.json)", transcripts.display())))
}

pub fn make_backend(cfg: &BackendConfig, category: &str) -> Result<Arc<dyn Backend>, Error> {
    Ok(match cfg {
        BackendConfig::Scripted { transcripts } => {
            Arc::new(ScriptedBackend::from_file(&transcript_path(transcripts, category)?)?)
        }
        BackendConfig::Live(c) => Arc::new(HttpBackend::new(c.clone())),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskOutcome {
    pub task: String,
    pub workspace: Option<PathBuf>,
    pub report: Option<TaskReport>,
    /// Harness-level failure; stage failures are recorded in the report.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub outcomes: Vec<TaskOutcome>,
}

impl SuiteOutcome {
    pub fn reports(&self) -> Vec<TaskReport> {
        self.outcomes.iter().filter_map(|o| o.report.clone()).collect()
    }

    pub fn has_errors(&self) -> bool {
        self.outcomes.iter().any(|o| o.error.is_some())
    }
}

fn resolve_card(cfg: &SuiteConfig, spec: &TaskSpec) -> Result<TaskCard, Error> {
    match spec {
        TaskSpec::Card(p) => load_task_card(p),
        TaskSpec::Category(c) => category_card(&cfg.dataset_root, c, &cfg.model),
    }
}

fn run_one(cfg: &SuiteConfig, pipeline: &PipelineConfig, spec: &TaskSpec) -> TaskOutcome {
    let label = match spec {
        TaskSpec::Card(p) => p.display().to_string(),
        TaskSpec::Category(c) => c.clone(),
    };
    let result = (|| {
        let card = resolve_card(cfg, spec)?;
        let category = card.category();
        let backend = make_backend(&cfg.backend, &category)?;
        let limits = cfg.limits.unwrap_or_else(|| RunLimits::for_backend(backend.id()));
        let (ws, report) = run_pipeline(&card, limits, pipeline, backend, &cfg.output_dir.join(&category))?;
        Ok::<_, Error>((category, ws.root().to_path_buf(), report))
    })();
    match result {
        Ok((task, ws, report)) => TaskOutcome { task, workspace: Some(ws), report: Some(report), error: None },
        Err(e) => {
            tracing::error!(task = %label, "task failed: {e}");
            TaskOutcome { task: label, workspace: None, report: None, error: Some(e.to_string()) }
        }
    }
}

/// Run every task once. Tasks run on up to `workers` threads; results keep
/// the input order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteOutcome, Error> {
    if cfg.tasks.is_empty() {
        return Err(Error::Config("no tasks".into()));
    }
    if let BackendConfig::Scripted { transcripts } = &cfg.backend {
        if !transcripts.exists() {
            return Err(Error::Config(format!("scripted backend needs transcripts; {} not found", transcripts.display())));
        }
    }
    let pipeline = cfg.pipeline_config()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TaskOutcome>>> = Mutex::new(vec![None; cfg.tasks.len()]);
    let workers = cfg.workers.clamp(1, cfg.tasks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = cfg.tasks.get(i) else { break };
                let outcome = run_one(cfg, &pipeline, spec);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(outcome);
            });
        }
    });
    let outcomes = slots.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().map(|o| o.expect("every task ran")).collect();
    Ok(SuiteOutcome { outcomes })
}
