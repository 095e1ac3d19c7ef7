//! System and task prompts for worker agents.

use std::collections::BTreeSet;

use crate::knowledge::{query_knowledge, KnowledgeEntry, KnowledgeQuery, KnowledgeStore};
use crate::task::TaskCard;
use crate::workspace::{AgentId, Feedback, DATASET_DIR};

use super::AgentSpec;

fn role_description(agent: AgentId) -> &'static str {
    match agent {
        AgentId::Prep => {
            "You are the Data Preparation Agent. Explore the dataset directory, identify normal training images, \
             test images and their anomaly labels, and index them in a CSV file. Training rows must contain only \
             normal (label 0) images."
        }
        AgentId::Loader => {
            "You are the Data Loader Agent. Write a Python data loader that reads the prepared CSV, decodes and \
             resizes images, applies augmentation to the training split, and can split training data into train \
             and validation subsets."
        }
        AgentId::Designer => {
            "You are the Model Designer Agent. Write a Python module defining the anomaly detection model requested \
             by the task, using the reference templates where they fit."
        }
        AgentId::Trainer => {
            "You are the Model Trainer Agent. Write and run the training script that fits the designed model on \
             normal training images, scores the test split and reports image-level AUROC."
        }
        AgentId::Manager => "You are the Manager Agent. You schedule the worker agents and validate their outputs.",
    }
}

fn conventions(agent: AgentId) -> &'static str {
    match agent {
        AgentId::Prep => {
            "dataset.csv: UTF-8, header row `image_path,split,label[,mask_path]`; image_path is relative to the \
             workspace root; split is train or test; label is 0 (normal) or 1 (anomalous)."
        }
        AgentId::Loader => {
            "Dataloader.py must accept `--self-check`, load one batch of training images, print a line starting \
             with `batch shape:` and exit 0."
        }
        AgentId::Designer => {
            "model.py must expose build_model(config) returning an object with fit(images) and score(image), and \
             must accept `--self-check` (build the model, run one forward pass on synthetic input, exit 0)."
        }
        AgentId::Trainer => {
            "train.py must accept `--self-check` and `--train`; training writes artifacts/metrics.json with a \
             numeric `auroc` and artifacts/scores.csv with header `image_path,score,label`."
        }
        AgentId::Manager => "",
    }
}

/// Default query tags per role, on top of the task's model and type.
fn role_tags(agent: AgentId) -> &'static [&'static str] {
    match agent {
        AgentId::Prep => &["dataset"],
        AgentId::Loader => &["augmentation"],
        AgentId::Designer => &["model"],
        AgentId::Trainer => &["train-script", "training"],
        AgentId::Manager => &[],
    }
}

pub fn knowledge_query(agent: AgentId, card: &TaskCard, limit: usize) -> KnowledgeQuery {
    let mut tags: BTreeSet<String> = role_tags(agent).iter().map(|s| s.to_string()).collect();
    tags.insert(card.category().to_lowercase());
    KnowledgeQuery { role: agent, task_type: card.task_type, model: card.model.clone(), tags, limit }
}

pub fn select_knowledge<'a>(
    store: &'a KnowledgeStore,
    agent: AgentId,
    card: &TaskCard,
    limit: usize,
) -> Vec<&'a KnowledgeEntry> {
    if store.is_empty() {
        return Vec::new();
    }
    query_knowledge(store, &knowledge_query(agent, card, limit))
}

pub fn system_prompt(spec: &AgentSpec, knowledge: &[&KnowledgeEntry]) -> String {
    let mut s = String::new();
    s.push_str(role_description(spec.agent_id));
    s.push_str("\n\nAll paths are relative to the workspace root. The dataset is available under `");
    s.push_str(DATASET_DIR);
    s.push_str("/`; write your outputs under `artifacts/`.\n\nGoal artifacts:\n");
    for a in &spec.goal_artifacts {
        s.push_str(&format!("- {a}\n"));
    }
    s.push_str("\nConventions: ");
    s.push_str(conventions(spec.agent_id));
    s.push_str("\n\nAvailable tools: ");
    s.push_str(&spec.allowed_tools.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", "));
    s.push_str(".\nStop calling tools once every goal artifact exists and passes its self-check.\n");
    if knowledge.is_empty() {
        s.push_str("\nNo reference knowledge is available for this task.\n");
    } else {
        s.push_str("\nReference knowledge:\n");
        for e in knowledge {
            s.push_str(&e.render());
            s.push('\n');
        }
    }
    s
}

pub fn task_prompt(card: &TaskCard, feedback: Option<&Feedback>) -> String {
    let mut s = format!("Task card:\n{}\n", card.to_json_pretty());
    if let Some(f) = feedback {
        s.push_str("\nManager feedback on your previous attempt:\n");
        s.push_str(&f.to_string());
        s.push('\n');
    }
    s
}
