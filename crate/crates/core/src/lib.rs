//! Manager-driven multi-agent pipeline that builds industrial anomaly
//! detection models: a manager schedules data preparation, data loading,
//! model design and training agents, validates each stage, and feeds back
//! targeted corrections until the pipeline completes or a cap is hit.

pub mod agents;
pub mod bench;
pub mod gateway;
pub mod knowledge;
pub mod ledger;
pub mod manager;
pub mod task;
pub mod tools;
pub mod suite;
pub mod synth;
pub mod workspace;

use thiserror::Error;

/// Top-level error for operations that span modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    TaskCard(#[from] task::TaskCardError),
    #[error(transparent)]
    Workspace(#[from] workspace::WorkspaceError),
    #[error(transparent)]
    Gateway(#[from] gateway::GatewayError),
    #[error(transparent)]
    Tool(#[from] tools::ToolError),
    #[error(transparent)]
    Metric(#[from] bench::MetricError),
    #[error(transparent)]
    Agent(#[from] agents::AgentError),
    #[error(transparent)]
    Knowledge(#[from] knowledge::KnowledgeError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}
