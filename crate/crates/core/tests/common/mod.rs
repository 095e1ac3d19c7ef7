#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use autoiad::bench::TaskReport;
use autoiad::gateway::{Backend, Completion, CompletionRequest, GatewayError, ScriptedBackend, TokenUsage};
use autoiad::manager::{run_pipeline, PipelineConfig, RunLimits};
use autoiad::suite::category_card;
use autoiad::synth::synth_dataset;
use autoiad::workspace::{AgentId, Workspace};

pub fn transcript(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("transcripts").join(name)
}

/// Wraps a backend and records the usage of every successful call.
pub struct Recording {
    inner: Arc<dyn Backend>,
    pub calls: Mutex<Vec<(AgentId, TokenUsage)>>,
}

impl Recording {
    pub fn new(inner: Arc<dyn Backend>) -> Arc<Self> {
        Arc::new(Recording { inner, calls: Mutex::new(Vec::new()) })
    }

    pub fn total(&self) -> TokenUsage {
        self.calls.lock().unwrap().iter().map(|(_, u)| *u).sum()
    }
}

impl Backend for Recording {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, GatewayError> {
        let c = self.inner.complete(req)?;
        self.calls.lock().unwrap().push((req.role, c.usage));
        Ok(c)
    }
}

pub struct Run {
    pub ws: Workspace,
    pub report: TaskReport,
    pub backend: Arc<Recording>,
    pub dir: tempfile::TempDir,
}

pub fn scripted(name: &str) -> Arc<dyn Backend> {
    Arc::new(ScriptedBackend::from_file(&transcript(name)).expect("transcript loads"))
}

/// Synthesize `category` (20/10/10, seed 42) and run the pipeline on it.
pub fn run_category(category: &str, transcript_name: &str, config: &PipelineConfig, limits: RunLimits) -> Run {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(category, 20, 10, 10, 42, &dir.path().join("data")).unwrap();
    let card = category_card(&dir.path().join("data"), category, "autoencoder").unwrap();
    let backend = Recording::new(scripted(transcript_name));
    let (ws, report) = run_pipeline(&card, limits, config, backend.clone(), &dir.path().join("runs")).unwrap();
    Run { ws, report, backend, dir }
}

pub mod fuzz;

/// Pairwise definition: P(s⁺ > s⁻) + ½·P(s⁺ = s⁻).
pub fn brute_force_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}
