//! TaskCard parsing and validation.
//!
//! A TaskCard is the only way a task enters the system. The on-disk format is
//! a JSON object:
//!
//! ```json
//! {
//!     "query": "I need a model to ...",
//!     "task_type": "classification",
//!     "model": "patchcore",
//!     "metirc": "auroc",
//!     "datasets": { "name": "data", "root_path": "path/to/dataset" }
//! }
//! ```
//!
//! `metirc` is accepted as an alias of `metric`. Keys the parser does not know
//! are kept so that a card survives a parse/serialize round trip.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaskCardError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("invalid value {value:?} for `{field}`")]
    InvalidValue { field: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Classification,
    Segmentation,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Classification => "classification",
            TaskType::Segmentation => "segmentation",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "classification" => Some(TaskType::Classification),
            "segmentation" => Some(TaskType::Segmentation),
            _ => None,
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auroc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "auroc" => Some(Metric::Auroc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskCard {
    pub query: String,
    pub task_type: TaskType,
    pub model: String,
    pub metric: Metric,
    pub dataset_name: String,
    pub dataset_root: PathBuf,
    /// Explicit category; see [`TaskCard::category`] for the derived default.
    pub category: Option<String>,
    /// Unknown top-level keys.
    pub extra: Map<String, Value>,
    /// Unknown keys inside `datasets`.
    pub dataset_extra: Map<String, Value>,
}

impl TaskCard {
    /// Category name, defaulting to the last segment of the dataset root.
    pub fn category(&self) -> String {
        if let Some(c) = &self.category {
            return c.clone();
        }
        self.dataset_root
            .components()
            .rev()
            .find_map(|c| match c {
                std::path::Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
                _ => None,
            })
            .unwrap_or_default()
    }

    /// Serialize to the canonical JSON layout (`metric`, never `metirc`).
    pub fn to_value(&self) -> Value {
        let mut obj = self.extra.clone();
        obj.insert("query".into(), Value::String(self.query.clone()));
        obj.insert("task_type".into(), Value::String(self.task_type.as_str().into()));
        obj.insert("model".into(), Value::String(self.model.clone()));
        obj.insert("metric".into(), Value::String(self.metric.as_str().into()));
        if let Some(c) = &self.category {
            obj.insert("category".into(), Value::String(c.clone()));
        }
        let mut ds = self.dataset_extra.clone();
        ds.insert("name".into(), Value::String(self.dataset_name.clone()));
        ds.insert(
            "root_path".into(),
            Value::String(self.dataset_root.to_string_lossy().into_owned()),
        );
        obj.insert("datasets".into(), Value::Object(ds));
        Value::Object(obj)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("task card serializes")
    }
}

const KNOWN_TOP: &[&str] = &["query", "task_type", "model", "metric", "metirc", "category", "datasets"];
const KNOWN_DATASET: &[&str] = &["name", "root_path"];

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

fn string_field(
    obj: &Map<String, Value>,
    key: &'static str,
) -> Result<Option<String>, TaskCardError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(TaskCardError::InvalidValue {
            field: key,
            value: other.to_string(),
        }),
    }
}

pub fn parse_task_card(json_text: &str) -> Result<TaskCard, TaskCardError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| TaskCardError::Parse {
        offset: byte_offset(json_text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(TaskCardError::Parse {
            offset: 0,
            message: "task card must be a JSON object".into(),
        });
    };

    let task_type_raw = string_field(&obj, "task_type")?.ok_or(TaskCardError::MissingField("task_type"))?;
    let task_type = TaskType::parse(&task_type_raw).ok_or(TaskCardError::InvalidValue {
        field: "task_type",
        value: task_type_raw,
    })?;
    let model = string_field(&obj, "model")?.ok_or(TaskCardError::MissingField("model"))?;

    let metric_raw = match (string_field(&obj, "metric")?, string_field(&obj, "metirc")?) {
        (Some(a), Some(b)) if a != b => {
            return Err(TaskCardError::Parse {
                offset: 0,
                message: format!("ambiguous metric: `metric`={a:?} conflicts with `metirc`={b:?}"),
            })
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => Metric::Auroc.as_str().to_string(),
    };
    let metric = Metric::parse(&metric_raw).ok_or(TaskCardError::InvalidValue {
        field: "metric",
        value: metric_raw,
    })?;

    let datasets = match obj.get("datasets") {
        Some(Value::Object(d)) => d.clone(),
        Some(other) => {
            return Err(TaskCardError::InvalidValue {
                field: "datasets",
                value: other.to_string(),
            })
        }
        None => return Err(TaskCardError::MissingField("datasets.root_path")),
    };
    let root = string_field(&datasets, "root_path")?.ok_or(TaskCardError::MissingField("datasets.root_path"))?;
    let dataset_name = string_field(&datasets, "name")?.unwrap_or_default();

    let extra = obj
        .iter()
        .filter(|(k, _)| !KNOWN_TOP.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let dataset_extra = datasets
        .iter()
        .filter(|(k, _)| !KNOWN_DATASET.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    Ok(TaskCard {
        query: string_field(&obj, "query")?.unwrap_or_default(),
        task_type,
        model,
        metric,
        dataset_name,
        dataset_root: PathBuf::from(root),
        category: string_field(&obj, "category")?,
        extra,
        dataset_extra,
    })
}

pub fn load_task_card(path: &Path) -> Result<TaskCard, crate::Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_task_card(&text)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl Issue {
    fn new(field: &str, message: &str) -> Self {
        Issue { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
    /// Non-blocking observations (e.g. an empty query).
    pub warnings: Vec<Issue>,
}

pub fn validate_task_card(card: &TaskCard, fs_root_exists: bool) -> ValidationReport {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    if card.model.trim().is_empty() {
        issues.push(Issue::new("model", "empty"));
    } else if card.model.split_whitespace().count() != 1 {
        issues.push(Issue::new("model", "must be a single token"));
    }
    if card.dataset_root.as_os_str().is_empty() {
        issues.push(Issue::new("dataset_root", "empty"));
    } else if !fs_root_exists {
        issues.push(Issue::new("dataset_root", "not found"));
    }
    if card.query.trim().is_empty() {
        warnings.push(Issue::new("query", "empty"));
    }
    ValidationReport { ok: issues.is_empty(), issues, warnings }
}
