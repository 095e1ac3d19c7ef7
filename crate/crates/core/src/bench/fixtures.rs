//! Bundled per-task result tables and the published summary rows they are
//! checked against.
//!
//! Fixture format: CSV with header
//! `task,success,time_s,completion_tokens,prompt_tokens,auroc`; `success` is
//! `k/4`, `auroc` a fraction, `NaN` (not computed) or `-` (no score). Lines
//! starting with `#` are notes.

use serde::Serialize;

use super::report::{aggregate, stages_from_count, SuiteSummary, TaskReport};
use super::MetricError;
use crate::gateway::TokenUsage;

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub notes: Vec<String>,
    pub reports: Vec<TaskReport>,
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("gemini-2.5-flash", include_str!("../../fixtures/gemini-2.5-flash.csv")),
    ("gpt-4o-mini", include_str!("../../fixtures/gpt-4o-mini.csv")),
    ("qwen3-235b", include_str!("../../fixtures/qwen3-235b.csv")),
    ("claude-3.7-sonnet", include_str!("../../fixtures/claude-3.7-sonnet.csv")),
    ("qwen-max", include_str!("../../fixtures/qwen-max.csv")),
    ("deepseek-v3", include_str!("../../fixtures/deepseek-v3.csv")),
    ("mla-bench", include_str!("../../fixtures/mla-bench.csv")),
    ("automl-agent", include_str!("../../fixtures/automl-agent.csv")),
    ("openmanus", include_str!("../../fixtures/openmanus.csv")),
    ("openhands", include_str!("../../fixtures/openhands.csv")),
    ("no-manager", include_str!("../../fixtures/no-manager.csv")),
    ("no-knowledge", include_str!("../../fixtures/no-knowledge.csv")),
];

const PUBLISHED: &str = include_str!("../../fixtures/published.csv");

fn field_err(line: usize, msg: String) -> MetricError {
    MetricError::Fixture(format!("line {line}: {msg}"))
}

/// Parse fixture-format CSV text (also the CSV emitted by `emit_report`).
pub fn parse_fixture(name: &str, text: &str) -> Result<Fixture, MetricError> {
    let notes = text
        .lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut reports = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| field_err(line, e.to_string()))?;
        if rec.len() != 6 {
            return Err(field_err(line, format!("expected 6 fields, got {}", rec.len())));
        }
        let k: u32 = rec[1]
            .strip_suffix("/4")
            .and_then(|k| k.parse().ok())
            .filter(|k| *k <= 4)
            .ok_or_else(|| field_err(line, format!("bad success `{}`", &rec[1])))?;
        let num = |j: usize, what: &str| -> Result<f64, MetricError> {
            rec[j].parse::<f64>().map_err(|_| field_err(line, format!("bad {what} `{}`", &rec[j])))
        };
        let int = |j: usize, what: &str| -> Result<u64, MetricError> {
            rec[j].parse::<u64>().map_err(|_| field_err(line, format!("bad {what} `{}`", &rec[j])))
        };
        let (auroc, auroc_nan) = match &rec[5] {
            "-" | "" => (None, false),
            s if s.eq_ignore_ascii_case("nan") => (None, true),
            _ => (Some(num(5, "auroc")?), false),
        };
        reports.push(TaskReport {
            task_name: rec[0].to_string(),
            stage_success: stages_from_count(k),
            elapsed_s: num(2, "time_s")?,
            usage: TokenUsage::new(int(4, "prompt_tokens")?, int(3, "completion_tokens")?),
            auroc,
            auroc_nan,
            halt_reason: None,
            steps: 0,
        });
    }
    Ok(Fixture { name: name.to_string(), notes, reports })
}

pub fn bundled_fixture(name: &str) -> Option<Fixture> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| parse_fixture(n, text).expect("bundled fixtures parse"))
}

pub fn bundled_fixtures() -> Vec<Fixture> {
    BUNDLED.iter().map(|(n, text)| parse_fixture(n, text).expect("bundled fixtures parse")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedRow {
    pub fixture: String,
    pub success: f64,
    pub time_s: f64,
    pub completion_tokens: f64,
    pub prompt_tokens: f64,
    pub auroc: Option<f64>,
    pub known_mismatch: Vec<String>,
}

pub fn published_rows() -> Vec<PublishedRow> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(PUBLISHED.as_bytes());
    reader
        .records()
        .map(|r| {
            let r = r.expect("published.csv parses");
            let f = |j: usize| r[j].parse::<f64>().expect("published number");
            PublishedRow {
                fixture: r[0].to_string(),
                success: f(1),
                time_s: f(2),
                completion_tokens: f(3),
                prompt_tokens: f(4),
                auroc: (&r[5] != "-").then(|| f(5)),
                known_mismatch: r[6].split_whitespace().map(str::to_string).collect(),
            }
        })
        .collect()
}

/// Tolerances used when comparing a derived summary to a published row.
pub const TOL_PERCENT: f64 = 0.05;
pub const TOL_TIME_S: f64 = 0.01;
pub const TOL_TOKENS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnCheck {
    pub column: &'static str,
    pub derived: Option<f64>,
    pub published: Option<f64>,
    pub matches: bool,
    pub known_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureCheck {
    pub fixture: String,
    pub summary: SuiteSummary,
    pub columns: Vec<ColumnCheck>,
}

impl FixtureCheck {
    /// Every column matches, or is a documented mismatch.
    pub fn ok(&self) -> bool {
        self.columns.iter().all(|c| c.matches || c.known_mismatch)
    }
}

fn cmp(column: &'static str, derived: Option<f64>, published: Option<f64>, tol: f64, known: &[String]) -> ColumnCheck {
    let matches = match (derived, published) {
        (Some(d), Some(p)) => (d - p).abs() <= tol,
        (None, None) => true,
        _ => false,
    };
    ColumnCheck { column, derived, published, matches, known_mismatch: known.iter().any(|k| k == column) }
}

/// Re-derive every published summary row from its fixture.
pub fn fixtures_check() -> Vec<FixtureCheck> {
    published_rows()
        .into_iter()
        .map(|p| {
            let fx = bundled_fixture(&p.fixture).unwrap_or_else(|| panic!("no fixture {}", p.fixture));
            let s = aggregate(&fx.reports).expect("fixtures are non-empty");
            let k = &p.known_mismatch;
            let columns = vec![
                cmp("success", Some(s.success_rate), Some(p.success), TOL_PERCENT, k),
                cmp("time_s", Some(s.mean_time_s), Some(p.time_s), TOL_TIME_S, k),
                cmp("completion_tokens", Some(s.mean_completion_tokens), Some(p.completion_tokens), TOL_TOKENS, k),
                cmp("prompt_tokens", Some(s.mean_prompt_tokens), Some(p.prompt_tokens), TOL_TOKENS, k),
                cmp("auroc", s.mean_auroc, p.auroc, TOL_PERCENT, k),
            ];
            FixtureCheck { fixture: p.fixture, summary: s, columns }
        })
        .collect()
}

pub fn render_fixtures_check(checks: &[FixtureCheck]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    let mut out = String::from("fixture              column              derived        published      status\n");
    for c in checks {
        for col in &c.columns {
            let status = match (col.matches, col.known_mismatch) {
                (true, _) => "ok",
                (false, true) => "documented mismatch",
                (false, false) => "MISMATCH",
            };
            out.push_str(&format!(
                "{:<20} {:<19} {:>14} {:>14}  {}\n",
                c.fixture,
                col.column,
                fmt(col.derived),
                fmt(col.published),
                status
            ));
        }
    }
    out
}
