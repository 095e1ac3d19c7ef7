use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use autoiad_ffi::*;

fn last_error() -> String {
    let p = autoiad_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { autoiad_string_free(p) };
    s
}

fn card_json(root: &Path) -> CString {
    let json = serde_json::json!({
        "query": "detect defects",
        "task_type": "classification",
        "model": "autoencoder",
        "metirc": "auroc",
        "datasets": {"name": "synth", "root_path": root},
    });
    CString::new(json.to_string()).unwrap()
}

#[test]
fn task_card_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut card = ptr::null_mut();
    let json = card_json(dir.path());
    assert_eq!(unsafe { autoiad_task_card_parse(json.as_ptr(), &mut card) }, AutoiadStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { autoiad_task_card_to_json(card, &mut out) }, AutoiadStatus::Ok);
    let text = take_string(out);
    assert!(text.contains("\"metric\""), "{text}");
    assert!(!text.contains("metirc"));
    assert_eq!(unsafe { autoiad_task_card_validate(card, &mut out) }, AutoiadStatus::Ok);
    assert!(take_string(out).contains("\"ok\":true"));
    unsafe { autoiad_task_card_free(card) };

    let bad = CString::new("{\"model\": 3}").unwrap();
    let mut card = ptr::null_mut();
    assert_eq!(unsafe { autoiad_task_card_parse(bad.as_ptr(), &mut card) }, AutoiadStatus::TaskCard);
    assert!(card.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { autoiad_task_card_parse(ptr::null(), &mut card) }, AutoiadStatus::NullArgument);
    assert!(last_error().contains("json"));
    unsafe { autoiad_task_card_free(ptr::null_mut()) };
    unsafe { autoiad_string_free(ptr::null_mut()) };
}

#[test]
fn auroc_through_the_abi() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut a = 0.0;
    assert_eq!(unsafe { autoiad_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut a) }, AutoiadStatus::Ok);
    assert_eq!(a, 0.75);
    let ones = [1u8, 1, 1, 1];
    assert_eq!(unsafe { autoiad_auroc(scores.as_ptr(), ones.as_ptr(), 4, &mut a) }, AutoiadStatus::Metric);
    assert!(last_error().contains("both classes"));
}

#[test]
fn fixture_summary_and_markdown() {
    let name = CString::new("gemini-2.5-flash").unwrap();
    let mut s = AutoiadSummary {
        n_tasks: 0,
        stages_completed: 0,
        success_rate: 0.0,
        mean_time_s: 0.0,
        mean_completion_tokens: 0.0,
        mean_prompt_tokens: 0.0,
        mean_auroc: 0.0,
        nan_auroc_tasks: 0,
    };
    assert_eq!(unsafe { autoiad_fixture_summary(name.as_ptr(), &mut s) }, AutoiadStatus::Ok);
    assert_eq!(s.n_tasks, 15);
    assert_eq!(s.stages_completed, 53);
    assert!((s.success_rate - 88.3).abs() <= 0.05);
    assert!((s.mean_auroc - 63.69).abs() <= 0.05);
    let mut md = ptr::null_mut();
    assert_eq!(unsafe { autoiad_fixture_markdown(name.as_ptr(), &mut md) }, AutoiadStatus::Ok);
    assert!(take_string(md).contains("| **Summary** | 88.3% |"));

    let missing = CString::new("nope").unwrap();
    assert_eq!(unsafe { autoiad_fixture_summary(missing.as_ptr(), &mut s) }, AutoiadStatus::NotFound);
    let sonnet = CString::new("claude-3.7-sonnet").unwrap();
    assert_eq!(unsafe { autoiad_fixture_summary(sonnet.as_ptr(), &mut s) }, AutoiadStatus::Ok);
    assert!(s.mean_auroc.is_nan());
}

#[test]
fn scripted_run_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    autoiad::synth::synth_dataset("synthwood", 6, 3, 3, 7, dir.path()).unwrap();
    let json = card_json(&dir.path().join("synthwood"));
    let mut card = ptr::null_mut();
    assert_eq!(unsafe { autoiad_task_card_parse(json.as_ptr(), &mut card) }, AutoiadStatus::Ok);
    let transcript = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/transcripts/adversarial.json");
    let transcript = CString::new(transcript).unwrap();
    let out_dir = CString::new(dir.path().join("runs").to_str().unwrap()).unwrap();
    let mut report = ptr::null_mut();
    let status = unsafe { autoiad_run_scripted(card, transcript.as_ptr(), out_dir.as_ptr(), 10, 60.0, 0, &mut report) };
    assert_eq!(status, AutoiadStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { autoiad_report_stages(report) }, 0);
    assert!(unsafe { autoiad_report_auroc(report) }.is_nan());
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { autoiad_report_to_json(report, &mut out) }, AutoiadStatus::Ok);
    let text = take_string(out);
    assert!(text.contains("\"halt_reason\":\"max_steps\""), "{text}");
    assert!(text.contains("\"steps\":10"), "{text}");
    unsafe { autoiad_report_free(report) };

    let bogus = CString::new("/nonexistent/transcript.json").unwrap();
    let status = unsafe { autoiad_run_scripted(card, bogus.as_ptr(), out_dir.as_ptr(), 10, 60.0, 0, &mut report) };
    assert_eq!(status, AutoiadStatus::NotFound);
    unsafe { autoiad_task_card_free(card) };
}

#[test]
fn generated_header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/autoiad.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["autoiad_last_error", "autoiad_run_scripted", "typedef struct AutoiadTaskCard AutoiadTaskCard"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-xc"]).arg(&header).output() else {
        eprintln!("cc not available; skipped the compile check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
