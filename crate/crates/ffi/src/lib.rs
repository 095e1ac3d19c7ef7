//! C ABI over the `autoiad` core.
//!
//! Every fallible function returns an [`AutoiadStatus`]; on failure the
//! message is available from [`autoiad_last_error`] on the same thread.
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Strings returned through `char **` out
//! parameters are released with [`autoiad_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;
use std::time::Duration;

use autoiad::bench::fixtures::bundled_fixture;
use autoiad::bench::{aggregate, compute_auroc, emit_report, ReportFormat, TaskReport};
use autoiad::gateway::ScriptedBackend;
use autoiad::manager::{run_pipeline, PipelineConfig, RunLimits};
use autoiad::task::{parse_task_card, validate_task_card, TaskCard};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutoiadStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    TaskCard = 3,
    Metric = 4,
    NotFound = 5,
    Run = 6,
    Panic = 7,
}

/// Parsed task card.
pub struct AutoiadTaskCard(TaskCard);

/// Outcome of one pipeline run.
pub struct AutoiadReport(TaskReport);

/// Suite aggregate. `mean_auroc` is NaN when no task has a numeric AUROC.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoiadSummary {
    pub n_tasks: u32,
    pub stages_completed: u64,
    pub success_rate: f64,
    pub mean_time_s: f64,
    pub mean_completion_tokens: f64,
    pub mean_prompt_tokens: f64,
    pub mean_auroc: f64,
    pub nan_auroc_tasks: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: AutoiadStatus, msg: impl Into<String>) -> AutoiadStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> AutoiadStatus) -> AutoiadStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AutoiadStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, AutoiadStatus> {
    if p.is_null() {
        return Err(fail(AutoiadStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(AutoiadStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn out_string(s: String, out: *mut *mut c_char) -> AutoiadStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: callers check `out` for null before calling.
            unsafe { *out = c.into_raw() };
            AutoiadStatus::Ok
        }
        Err(_) => fail(AutoiadStatus::InvalidUtf8, "result contains a NUL byte"),
    }
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(AutoiadStatus::NullArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn autoiad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn autoiad_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a task card from JSON.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn autoiad_task_card_parse(json: *const c_char, out: *mut *mut AutoiadTaskCard) -> AutoiadStatus {
    guard(|| {
        non_null!(out);
        let text = try_arg!(str_arg(json, "json"));
        match parse_task_card(text) {
            Ok(card) => {
                *out = Box::into_raw(Box::new(AutoiadTaskCard(card)));
                AutoiadStatus::Ok
            }
            Err(e) => fail(AutoiadStatus::TaskCard, e.to_string()),
        }
    })
}

/// # Safety
/// `card` is null or a live handle from [`autoiad_task_card_parse`].
#[no_mangle]
pub unsafe extern "C" fn autoiad_task_card_free(card: *mut AutoiadTaskCard) {
    if !card.is_null() {
        drop(Box::from_raw(card));
    }
}

/// Canonical JSON for the card.
///
/// # Safety
/// `card` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn autoiad_task_card_to_json(card: *const AutoiadTaskCard, out: *mut *mut c_char) -> AutoiadStatus {
    guard(|| {
        non_null!(card, out);
        out_string((*card).0.to_json_pretty(), out)
    })
}

/// Validation report as JSON (`{"ok": bool, "issues": [...]}`).
///
/// # Safety
/// `card` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn autoiad_task_card_validate(card: *const AutoiadTaskCard, out: *mut *mut c_char) -> AutoiadStatus {
    guard(|| {
        non_null!(card, out);
        let card = &(*card).0;
        let report = validate_task_card(card, card.dataset_root.is_dir());
        match serde_json::to_string(&report) {
            Ok(s) => out_string(s, out),
            Err(e) => fail(AutoiadStatus::TaskCard, e.to_string()),
        }
    })
}

/// Image-level AUROC of `n` scores against 0/1 labels.
///
/// # Safety
/// `scores` and `labels` point to `n` elements each; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn autoiad_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> AutoiadStatus {
    guard(|| {
        non_null!(scores, labels, out);
        let s = std::slice::from_raw_parts(scores, n);
        let l = std::slice::from_raw_parts(labels, n);
        match compute_auroc(s, l) {
            Ok(a) => {
                *out = a;
                AutoiadStatus::Ok
            }
            Err(e) => fail(AutoiadStatus::Metric, e.to_string()),
        }
    })
}

fn fixture_reports(name: &str) -> Result<Vec<TaskReport>, AutoiadStatus> {
    bundled_fixture(name)
        .map(|f| f.reports)
        .ok_or_else(|| fail(AutoiadStatus::NotFound, format!("no bundled fixture `{name}`")))
}

fn summarize(reports: &[TaskReport], out: &mut AutoiadSummary) -> AutoiadStatus {
    match aggregate(reports) {
        Ok(s) => {
            *out = AutoiadSummary {
                n_tasks: s.n_tasks as u32,
                stages_completed: s.stages_completed,
                success_rate: s.success_rate,
                mean_time_s: s.mean_time_s,
                mean_completion_tokens: s.mean_completion_tokens,
                mean_prompt_tokens: s.mean_prompt_tokens,
                mean_auroc: s.mean_auroc.unwrap_or(f64::NAN),
                nan_auroc_tasks: s.nan_auroc_tasks as u32,
            };
            AutoiadStatus::Ok
        }
        Err(e) => fail(AutoiadStatus::Metric, e.to_string()),
    }
}

/// Aggregate of a bundled fixture (e.g. `gemini-2.5-flash`).
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn autoiad_fixture_summary(name: *const c_char, out: *mut AutoiadSummary) -> AutoiadStatus {
    guard(|| {
        non_null!(out);
        let name = try_arg!(str_arg(name, "name"));
        let reports = try_arg!(fixture_reports(name));
        summarize(&reports, &mut *out)
    })
}

/// Markdown table of a bundled fixture, with its summary row.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn autoiad_fixture_markdown(name: *const c_char, out: *mut *mut c_char) -> AutoiadStatus {
    guard(|| {
        non_null!(out);
        let name = try_arg!(str_arg(name, "name"));
        let reports = try_arg!(fixture_reports(name));
        out_string(emit_report(&reports, ReportFormat::Markdown), out)
    })
}

/// Run the pipeline for `card` against a scripted transcript. Runs are
/// created under `out_dir`. `attempt_cap` 0 disables the per-stage
/// dispatch cap.
///
/// # Safety
/// `card` is a live handle; strings are NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn autoiad_run_scripted(
    card: *const AutoiadTaskCard,
    transcript_path: *const c_char,
    out_dir: *const c_char,
    max_steps: u64,
    time_cap_s: f64,
    attempt_cap: u32,
    out: *mut *mut AutoiadReport,
) -> AutoiadStatus {
    guard(|| {
        non_null!(card, out);
        let transcript = try_arg!(str_arg(transcript_path, "transcript_path"));
        let out_dir = try_arg!(str_arg(out_dir, "out_dir"));
        if !(time_cap_s.is_finite() && time_cap_s >= 0.0) {
            return fail(AutoiadStatus::Run, format!("time_cap_s must be non-negative, got {time_cap_s}"));
        }
        let backend = match ScriptedBackend::from_file(&PathBuf::from(transcript)) {
            Ok(b) => Arc::new(b),
            Err(e) => return fail(AutoiadStatus::NotFound, e.to_string()),
        };
        let limits = RunLimits { max_steps, time_cap: Duration::from_secs_f64(time_cap_s) };
        let config = PipelineConfig { attempt_cap: (attempt_cap > 0).then_some(attempt_cap), ..PipelineConfig::default() };
        match run_pipeline(&(*card).0, limits, &config, backend, &PathBuf::from(out_dir)) {
            Ok((_, report)) => {
                *out = Box::into_raw(Box::new(AutoiadReport(report)));
                AutoiadStatus::Ok
            }
            Err(e) => fail(AutoiadStatus::Run, e.to_string()),
        }
    })
}

/// # Safety
/// `report` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn autoiad_report_free(report: *mut AutoiadReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of validated stages (0..=4).
///
/// # Safety
/// `report` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn autoiad_report_stages(report: *const AutoiadReport) -> u32 {
    if report.is_null() {
        return 0;
    }
    (*report).0.stages_completed()
}

/// AUROC of the run; NaN when absent.
///
/// # Safety
/// `report` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn autoiad_report_auroc(report: *const AutoiadReport) -> f64 {
    if report.is_null() {
        return f64::NAN;
    }
    (*report).0.auroc.unwrap_or(f64::NAN)
}

/// Full report as JSON.
///
/// # Safety
/// `report` is a live handle; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn autoiad_report_to_json(report: *const AutoiadReport, out: *mut *mut c_char) -> AutoiadStatus {
    guard(|| {
        non_null!(report, out);
        match serde_json::to_string(&(*report).0) {
            Ok(s) => out_string(s, out),
            Err(e) => fail(AutoiadStatus::Run, e.to_string()),
        }
    })
}
