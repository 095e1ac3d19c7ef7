use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::gateway::TokenUsage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_name: String,
    /// prep, loader, designer, trainer.
    pub stage_success: [bool; 4],
    pub elapsed_s: f64,
    pub usage: TokenUsage,
    /// Fraction in [0, 1]; present only when the trainer stage succeeded.
    pub auroc: Option<f64>,
    /// The run produced a NaN AUROC (recorded as absent).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub auroc_nan: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halt_reason: Option<String>,
    #[serde(default)]
    pub steps: u64,
}

impl TaskReport {
    pub fn stages_completed(&self) -> u32 {
        self.stage_success.iter().filter(|&&s| s).count() as u32
    }

    /// `auroc present ⇒ trainer stage succeeded`, and the value is a finite fraction.
    pub fn is_consistent(&self) -> bool {
        match self.auroc {
            None => true,
            Some(a) => self.stage_success[3] && a.is_finite() && (0.0..=1.0).contains(&a),
        }
    }
}

/// First `k` stages marked successful; the pipeline is sequential, so a
/// `k/4` count implies the first `k` stages.
pub fn stages_from_count(k: u32) -> [bool; 4] {
    std::array::from_fn(|i| (i as u32) < k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub n_tasks: usize,
    pub stages_completed: u64,
    /// Percent.
    pub success_rate: f64,
    pub mean_time_s: f64,
    pub mean_completion_tokens: f64,
    pub mean_prompt_tokens: f64,
    /// Percent, over tasks with a numeric AUROC; `None` when there are none.
    pub mean_auroc: Option<f64>,
    pub auroc_tasks: usize,
    /// Tasks whose AUROC was NaN; excluded from `mean_auroc`.
    pub nan_auroc_tasks: usize,
}

/// `100 · Σ completed stages / (4 · n)`.
pub fn success_rate(reports: &[TaskReport]) -> Result<f64, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::UndefinedMetric("success rate of an empty suite".into()));
    }
    let done: u64 = reports.iter().map(|r| r.stages_completed() as u64).sum();
    Ok(100.0 * done as f64 / (4 * reports.len()) as f64)
}

/// Order-independent float sum: values are sorted before adding, so any
/// permutation of the input gives bit-identical results.
fn stable_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.into_iter().sum()
}

pub fn aggregate(reports: &[TaskReport]) -> Result<SuiteSummary, MetricError> {
    let success_rate = success_rate(reports)?;
    let n = reports.len();
    let stages_completed = reports.iter().map(|r| r.stages_completed() as u64).sum();
    let completion: u128 = reports.iter().map(|r| r.usage.completion_tokens as u128).sum();
    let prompt: u128 = reports.iter().map(|r| r.usage.prompt_tokens as u128).sum();
    let mut nan_auroc_tasks = 0;
    let mut aurocs = Vec::new();
    for r in reports {
        match r.auroc {
            Some(a) if a.is_finite() => aurocs.push(a * 100.0),
            Some(_) => nan_auroc_tasks += 1,
            None if r.auroc_nan => nan_auroc_tasks += 1,
            None => {}
        }
    }
    if nan_auroc_tasks > 0 {
        tracing::debug!(nan_auroc_tasks, "NaN AUROC values excluded from the mean");
    }
    let auroc_tasks = aurocs.len();
    let mean_auroc = (auroc_tasks > 0).then(|| stable_sum(aurocs) / auroc_tasks as f64);
    Ok(SuiteSummary {
        n_tasks: n,
        stages_completed,
        success_rate,
        mean_time_s: stable_sum(reports.iter().map(|r| r.elapsed_s).collect()) / n as f64,
        mean_completion_tokens: completion as f64 / n as f64,
        mean_prompt_tokens: prompt as f64 / n as f64,
        mean_auroc,
        auroc_tasks,
        nan_auroc_tasks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (csv, markdown)")),
        }
    }
}

pub const CSV_HEADER: [&str; 6] = ["task", "success", "time_s", "completion_tokens", "prompt_tokens", "auroc"];

fn csv_auroc(r: &TaskReport) -> String {
    match r.auroc {
        Some(a) if a.is_finite() => format!("{a:.4}"),
        Some(_) => "NaN".into(),
        None if r.auroc_nan => "NaN".into(),
        None => "-".into(),
    }
}

fn md_auroc(r: &TaskReport) -> String {
    match r.auroc {
        Some(a) if a.is_finite() => format!("{:.2}", a * 100.0),
        Some(_) => "NaN".into(),
        None if r.auroc_nan => "NaN".into(),
        None => "-".into(),
    }
}

/// Render reports. CSV has one row per task in the fixture format, so its
/// output can be read back; markdown appends a summary row.
pub fn emit_report(reports: &[TaskReport], format: ReportFormat) -> String {
    if reports.is_empty() {
        tracing::warn!("emitting a report with no tasks");
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for r in reports {
                w.write_record([
                    r.task_name.clone(),
                    format!("{}/4", r.stages_completed()),
                    format!("{:.2}", r.elapsed_s),
                    r.usage.completion_tokens.to_string(),
                    r.usage.prompt_tokens.to_string(),
                    csv_auroc(r),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
        }
        ReportFormat::Markdown => {
            let mut s = String::from(
                "| Task | Success | Time (s) | Tokens (completion/prompt) | AUROC (%) |\n|---|---|---|---|---|\n",
            );
            for r in reports {
                let _ = writeln!(
                    s,
                    "| {} | {}/4 | {:.2} | {}/{} | {} |",
                    r.task_name,
                    r.stages_completed(),
                    r.elapsed_s,
                    r.usage.completion_tokens,
                    r.usage.prompt_tokens,
                    md_auroc(r)
                );
            }
            if let Ok(sum) = aggregate(reports) {
                let _ = writeln!(
                    s,
                    "| **Summary** | {:.1}% | {:.2} | {:.0}/{:.0} | {} |",
                    sum.success_rate,
                    sum.mean_time_s,
                    sum.mean_completion_tokens,
                    sum.mean_prompt_tokens,
                    sum.mean_auroc.map(|a| format!("{a:.2}")).unwrap_or_else(|| "-".into())
                );
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn report(name: &str, k: u32, t: f64, c: u64, p: u64, auroc: Option<f64>) -> TaskReport {
        TaskReport {
            task_name: name.into(),
            stage_success: stages_from_count(k),
            elapsed_s: t,
            usage: TokenUsage::new(p, c),
            auroc,
            auroc_nan: false,
            halt_reason: None,
            steps: 0,
        }
    }

    #[test]
    fn success_rate_cases() {
        assert_eq!(success_rate(&[report("a", 0, 1.0, 0, 0, None)]).unwrap(), 0.0);
        let two = [report("a", 4, 1.0, 0, 0, None), report("b", 2, 1.0, 0, 0, None)];
        assert_eq!(success_rate(&two).unwrap(), 75.0);
        assert!(matches!(success_rate(&[]), Err(MetricError::UndefinedMetric(_))));
    }

    #[test]
    fn single_report_summary_equals_report() {
        let r = report("a", 4, 12.5, 100, 40, Some(0.9));
        let s = aggregate(std::slice::from_ref(&r)).unwrap();
        assert_eq!(s.success_rate, 100.0);
        assert_eq!(s.mean_time_s, 12.5);
        assert_eq!(s.mean_completion_tokens, 100.0);
        assert_eq!(s.mean_prompt_tokens, 40.0);
        assert_eq!(s.mean_auroc, Some(90.0));
    }

    #[test]
    fn nan_is_excluded_and_flagged_but_zero_counts() {
        let mut nan = report("n", 3, 1.0, 0, 0, None);
        nan.auroc_nan = true;
        let reports = [report("a", 4, 1.0, 0, 0, Some(0.0)), report("b", 4, 1.0, 0, 0, Some(0.8)), nan];
        let s = aggregate(&reports).unwrap();
        assert_eq!(s.mean_auroc, Some(40.0));
        assert_eq!(s.auroc_tasks, 2);
        assert_eq!(s.nan_auroc_tasks, 1);
    }

    #[test]
    fn csv_and_markdown_shapes() {
        let one = [report("bottle", 4, 550.234, 1311445, 18574, Some(0.0))];
        let csv = emit_report(&one, ReportFormat::Csv);
        assert_eq!(csv, "task,success,time_s,completion_tokens,prompt_tokens,auroc\nbottle,4/4,550.23,1311445,18574,0.0000\n");
        assert_eq!(csv.lines().count(), 2);
        let md = emit_report(&one, ReportFormat::Markdown);
        assert!(md.contains("| bottle | 4/4 | 550.23 | 1311445/18574 | 0.00 |"));
        assert!(md.contains("| **Summary** | 100.0% |"));
        assert_eq!(emit_report(&[], ReportFormat::Csv).lines().count(), 1);
        assert_eq!(emit_report(&[], ReportFormat::Markdown).lines().count(), 2);
    }

    #[test]
    fn consistency_invariant() {
        assert!(report("a", 4, 0.0, 0, 0, Some(0.5)).is_consistent());
        assert!(!report("a", 3, 0.0, 0, 0, Some(0.5)).is_consistent());
        assert!(report("a", 3, 0.0, 0, 0, None).is_consistent());
    }
}
