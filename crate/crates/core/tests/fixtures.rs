use std::time::Instant;

use autoiad::bench::fixtures::{bundled_fixture, fixtures_check, parse_fixture};
use autoiad::bench::{aggregate, emit_report, ReportFormat};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn gemini_aggregate_matches_the_published_row() {
    let started = Instant::now();
    let fx = bundled_fixture("gemini-2.5-flash").unwrap();
    let s = aggregate(&fx.reports).unwrap();
    assert!(started.elapsed().as_secs_f64() < 1.0);
    assert!(close(s.success_rate, 88.3, 0.05), "{}", s.success_rate);
    assert!(close(s.mean_time_s, 335.01, 0.05), "{}", s.mean_time_s);
    assert!(close(s.mean_completion_tokens, 1_557_258.0, 1.0));
    assert!(close(s.mean_prompt_tokens, 18_797.0, 1.0));
    assert!(close(s.mean_auroc.unwrap(), 63.69, 0.05));
    assert_eq!(s.nan_auroc_tasks, 7);
    assert_eq!(s.auroc_tasks, 8);
}

#[test]
fn success_rate_is_stage_sum_over_sixty() {
    let expected = [
        ("gemini-2.5-flash", 53, 88.3),
        ("gpt-4o-mini", 26, 43.3),
        ("qwen3-235b", 30, 50.0),
        ("claude-3.7-sonnet", 38, 63.3),
        ("qwen-max", 46, 76.7),
        ("deepseek-v3", 23, 38.3),
    ];
    for (name, stages, pct) in expected {
        let s = aggregate(&bundled_fixture(name).unwrap().reports).unwrap();
        assert_eq!(s.stages_completed, stages, "{name}");
        assert_eq!(s.success_rate, 100.0 * stages as f64 / 60.0);
        assert!(close(s.success_rate, pct, 0.05), "{name}: {}", s.success_rate);
    }
    // The two published rows that disagree with the per-task tables are
    // annotated in the fixtures, not matched.
    for name in ["qwen-max", "deepseek-v3"] {
        let fx = bundled_fixture(name).unwrap();
        assert!(fx.notes.iter().any(|n| n.starts_with("note:")), "{name} lacks a discrepancy note");
    }
}

#[test]
fn fixtures_check_passes_with_only_documented_mismatches() {
    let checks = fixtures_check();
    assert_eq!(checks.len(), 12);
    assert!(checks.iter().all(|c| c.ok()));
    let documented: Vec<(String, &str)> = checks
        .iter()
        .flat_map(|c| c.columns.iter().filter(|col| !col.matches).map(move |col| (c.fixture.clone(), col.column)))
        .collect();
    assert_eq!(
        documented,
        [
            ("openmanus".to_string(), "success"),
            ("qwen-max".to_string(), "success"),
            ("deepseek-v3".to_string(), "success"),
            ("deepseek-v3".to_string(), "prompt_tokens"),
        ]
    );
}

#[test]
fn gemini_markdown_matches_golden() {
    let fx = bundled_fixture("gemini-2.5-flash").unwrap();
    let md = emit_report(&fx.reports, ReportFormat::Markdown);
    assert_eq!(md, include_str!("golden/gemini.md"));
}

#[test]
fn csv_report_round_trips() {
    for name in ["gemini-2.5-flash", "claude-3.7-sonnet", "no-knowledge"] {
        let fx = bundled_fixture(name).unwrap();
        let csv = emit_report(&fx.reports, ReportFormat::Csv);
        let back = parse_fixture(name, &csv).unwrap();
        assert_eq!(back.reports.len(), fx.reports.len());
        for (a, b) in fx.reports.iter().zip(&back.reports) {
            assert_eq!(a.stage_success, b.stage_success);
            assert_eq!(a.usage, b.usage);
            assert_eq!(a.auroc_nan, b.auroc_nan);
            assert!(close(a.elapsed_s, b.elapsed_s, 0.005));
            match (a.auroc, b.auroc) {
                (Some(x), Some(y)) => assert!(close(x, y, 5e-5)),
                (x, y) => assert_eq!(x, y),
            }
        }
    }
}
