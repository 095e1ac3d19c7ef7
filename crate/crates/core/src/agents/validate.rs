//! Syntactic artifact checks (used by self-review) and the stage gates
//! (used by the manager).

use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::Value;

use crate::tools::{Sandbox, ToolError};
use crate::workspace::{GateOutcome, Stage, DATALOADER_PY, DATASET_CSV, METRICS_JSON, MODEL_PY};

use super::read_to_string_lossy;

pub const DATASET_COLUMNS: [&str; 3] = ["image_path", "split", "label"];

/// Cheap, side-effect-free check of one goal artifact.
pub fn check_artifact(root: &Path, rel: &str) -> Result<(), String> {
    let path = root.join(rel);
    let text = read_to_string_lossy(&path).ok_or_else(|| format!("{rel} does not exist"))?;
    if rel.ends_with(".csv") {
        let header = text.lines().next().unwrap_or("");
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let missing: Vec<&str> = DATASET_COLUMNS.iter().copied().filter(|c| !cols.contains(c)).collect();
        if !missing.is_empty() {
            return Err(format!("{rel} header lacks {}", missing.join(", ")));
        }
    } else if rel.ends_with(".py") {
        if text.trim().is_empty() {
            return Err(format!("{rel} is empty"));
        }
        if !text.contains("--self-check") {
            return Err(format!("{rel} does not support --self-check"));
        }
    } else if rel.ends_with(".json") {
        let v: Value = serde_json::from_str(&text).map_err(|e| format!("{rel} is not valid JSON: {e}"))?;
        if rel == METRICS_JSON && v.get("auroc").is_none() {
            return Err(format!("{rel} has no `auroc` key"));
        }
    }
    Ok(())
}

fn pass(message: impl Into<String>) -> GateOutcome {
    GateOutcome { pass: true, failed_check: None, message: message.into() }
}

fn fail(check: &str, message: impl Into<String>) -> GateOutcome {
    GateOutcome { pass: false, failed_check: Some(check.to_string()), message: message.into() }
}

/// Run the stage's validation gate against the workspace rooted at `sb`.
/// `deadline` bounds any script the gate executes.
pub fn validate_stage(stage: Stage, sb: &Sandbox, deadline: Option<Instant>) -> GateOutcome {
    match stage {
        Stage::Prep => validate_dataset_csv(sb),
        Stage::Loader => self_check_gate(sb, DATALOADER_PY, deadline, true),
        Stage::Designer => self_check_gate(sb, MODEL_PY, deadline, false),
        Stage::Trainer => validate_metrics(sb),
    }
}

fn validate_dataset_csv(sb: &Sandbox) -> GateOutcome {
    let path = sb.root().join(DATASET_CSV);
    if !path.is_file() {
        return fail("artifact_missing", format!("{DATASET_CSV} was not produced"));
    }
    let mut reader = match csv::Reader::from_path(&path) {
        Ok(r) => r,
        Err(e) => return fail("csv_parse", format!("{DATASET_CSV} cannot be read: {e}")),
    };
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return fail("csv_parse", format!("{DATASET_CSV} header: {e}")),
    };
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing: Vec<&str> = DATASET_COLUMNS.iter().copied().filter(|c| col(c).is_none()).collect();
    if !missing.is_empty() {
        return fail("csv_schema", format!("{DATASET_CSV} is missing column(s): {}", missing.join(", ")));
    }
    let (ci, cs, cl) = (col("image_path").unwrap(), col("split").unwrap(), col("label").unwrap());
    let (mut n_train, mut n_test) = (0usize, 0usize);
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => return fail("csv_parse", format!("{DATASET_CSV} line {line}: {e}")),
        };
        let image = rec.get(ci).unwrap_or("").trim();
        let split = rec.get(cs).unwrap_or("").trim();
        let label = match rec.get(cl).unwrap_or("").trim() {
            "0" => 0,
            "1" => 1,
            other => return fail("csv_schema", format!("line {line}: label must be 0 or 1, got {other:?}")),
        };
        match split {
            "train" | "val" => n_train += 1,
            "test" => n_test += 1,
            other => return fail("csv_schema", format!("line {line}: split must be train, val or test, got {other:?}")),
        }
        match sb.resolve(image) {
            Ok(p) if p.is_file() => {}
            Ok(_) => return fail("image_exists", format!("line {line}: image {image:?} does not exist")),
            Err(e) => return fail("image_exists", format!("line {line}: image {image:?} rejected: {e}")),
        }
        if split != "test" && label != 0 {
            return fail(
                "normal_only_training",
                format!("line {line}: {split} row {image:?} has label 1; models must be trained on normal samples only"),
            );
        }
    }
    if n_train == 0 || n_test == 0 {
        return fail("empty_split", format!("{DATASET_CSV} needs train and test rows (train={n_train}, test={n_test})"));
    }
    pass(format!("{DATASET_CSV}: {n_train} train rows, {n_test} test rows"))
}

fn self_check_gate(sb: &Sandbox, script: &str, deadline: Option<Instant>, want_batch_line: bool) -> GateOutcome {
    if !sb.root().join(script).is_file() {
        return fail("artifact_missing", format!("{script} was not produced"));
    }
    let mut timeout = sb.script_timeout;
    if let Some(d) = deadline {
        let left = d.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return fail("time_cap", format!("no time left to run {script} --self-check"));
        }
        timeout = timeout.min(left).max(Duration::from_millis(1));
    }
    let out = match sb.run_script(script, &["--self-check".to_string()], timeout) {
        Ok(out) => out,
        Err(ToolError::Timeout(out)) => {
            return fail("self_check_timeout", format!("{script} --self-check timed out after {:.1}s", out.duration.as_secs_f64()))
        }
        Err(e) => return fail("self_check_exit", format!("{script} --self-check could not run: {e}")),
    };
    if out.exit_code != Some(0) {
        let tail: String = out.stderr.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join("\n");
        return fail("self_check_exit", format!("{script} --self-check exited with {:?}: {tail}", out.exit_code));
    }
    if want_batch_line {
        match out.stdout.lines().find(|l| l.trim_start().to_lowercase().starts_with("batch shape")) {
            Some(line) => pass(format!("{script}: {}", line.trim())),
            None => fail("batch_shape", format!("{script} --self-check printed no `batch shape:` line")),
        }
    } else {
        pass(format!("{script} --self-check exited 0"))
    }
}

fn validate_metrics(sb: &Sandbox) -> GateOutcome {
    let path = sb.root().join(METRICS_JSON);
    let Some(text) = read_to_string_lossy(&path) else {
        return fail("artifact_missing", format!("{METRICS_JSON} was not produced"));
    };
    // Python's json module writes NaN as a bare token, which serde rejects.
    if text.contains("NaN") || text.contains("Infinity") {
        return fail("auroc_not_finite", format!("{METRICS_JSON} contains a non-finite value"));
    }
    let v: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return fail("metrics_parse", format!("{METRICS_JSON}: {e}")),
    };
    match v.get("auroc") {
        None => fail("auroc_missing", format!("{METRICS_JSON} has no `auroc` key")),
        Some(a) => match a.as_f64() {
            None => fail("auroc_not_finite", format!("{METRICS_JSON} auroc is not a number: {a}")),
            Some(x) if !x.is_finite() => fail("auroc_not_finite", format!("auroc = {x}")),
            Some(x) if !(0.0..=1.0).contains(&x) => fail("auroc_range", format!("auroc {x} outside [0, 1]")),
            Some(x) => pass(format!("auroc = {x:.4}")),
        },
    }
}

/// `auroc` from a metrics file, when present and finite.
pub(crate) fn read_auroc(root: &Path) -> Option<f64> {
    let text = read_to_string_lossy(&root.join(METRICS_JSON))?;
    let v: Value = serde_json::from_str(&text).ok()?;
    v.get("auroc")?.as_f64().filter(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn sandbox() -> (tempfile::TempDir, Sandbox) {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("artifacts")).unwrap();
        fs::create_dir_all(dir.path().join("dataset/train/good")).unwrap();
        fs::create_dir_all(dir.path().join("dataset/test/bad")).unwrap();
        fs::write(dir.path().join("dataset/train/good/a.png"), b"x").unwrap();
        fs::write(dir.path().join("dataset/test/bad/b.png"), b"x").unwrap();
        let sb = Sandbox::new(dir.path()).unwrap();
        (dir, sb)
    }

    fn write(sb: &Sandbox, rel: &str, text: &str) {
        fs::write(sb.root().join(rel), text).unwrap();
    }

    #[test]
    fn dataset_gate() {
        let (_d, sb) = sandbox();
        assert_eq!(validate_stage(Stage::Prep, &sb, None).failed_check.as_deref(), Some("artifact_missing"));
        let good = "image_path,split,label,mask_path\ndataset/train/good/a.png,train,0,\ndataset/test/bad/b.png,test,1,\n";
        write(&sb, DATASET_CSV, good);
        let out = validate_stage(Stage::Prep, &sb, None);
        assert!(out.pass, "{out:?}");

        write(&sb, DATASET_CSV, "image_path,split\ndataset/train/good/a.png,train\n");
        let out = validate_stage(Stage::Prep, &sb, None);
        assert_eq!(out.failed_check.as_deref(), Some("csv_schema"));
        assert!(out.message.contains("label"));

        write(&sb, DATASET_CSV, "image_path,split,label\ndataset/test/bad/b.png,train,1\ndataset/test/bad/b.png,test,1\n");
        let out = validate_stage(Stage::Prep, &sb, None);
        assert_eq!(out.failed_check.as_deref(), Some("normal_only_training"));

        write(&sb, DATASET_CSV, "image_path,split,label\ndataset/nope.png,train,0\n");
        assert_eq!(validate_stage(Stage::Prep, &sb, None).failed_check.as_deref(), Some("image_exists"));
        write(&sb, DATASET_CSV, "image_path,split,label\n../../etc/passwd,train,0\n");
        assert_eq!(validate_stage(Stage::Prep, &sb, None).failed_check.as_deref(), Some("image_exists"));
    }

    #[test]
    fn metrics_gate() {
        let (_d, sb) = sandbox();
        let check = |text: &str| {
            write(&sb, METRICS_JSON, text);
            validate_stage(Stage::Trainer, &sb, None).failed_check
        };
        assert_eq!(check(r#"{"auroc": 0.97, "n_test": 20}"#), None);
        assert_eq!(check(r#"{"auroc": 0.0}"#), None);
        assert_eq!(check(r#"{"auroc": NaN}"#).as_deref(), Some("auroc_not_finite"));
        assert_eq!(check(r#"{"auroc": 1.5}"#).as_deref(), Some("auroc_range"));
        assert_eq!(check(r#"{"n_test": 3}"#).as_deref(), Some("auroc_missing"));
        assert_eq!(check("not json").as_deref(), Some("metrics_parse"));
    }

    #[test]
    fn self_check_gates() {
        let (_d, sb) = sandbox();
        assert_eq!(validate_stage(Stage::Designer, &sb, None).failed_check.as_deref(), Some("artifact_missing"));
        write(&sb, MODEL_PY, "import sys\nassert '--self-check' in sys.argv\nprint('ok')\n");
        assert!(validate_stage(Stage::Designer, &sb, None).pass);
        write(&sb, MODEL_PY, "{{kb:model-reconstruction}}\n");
        assert_eq!(validate_stage(Stage::Designer, &sb, None).failed_check.as_deref(), Some("self_check_exit"));

        write(&sb, DATALOADER_PY, "print('loaded')\n");
        assert_eq!(validate_stage(Stage::Loader, &sb, None).failed_check.as_deref(), Some("batch_shape"));
        write(&sb, DATALOADER_PY, "print('batch shape: (4, 64, 64)')\n");
        assert!(validate_stage(Stage::Loader, &sb, None).pass);
        let past = Instant::now() - Duration::from_millis(1);
        assert_eq!(validate_stage(Stage::Loader, &sb, Some(past)).failed_check.as_deref(), Some("time_cap"));
    }

    #[test]
    fn artifact_checks() {
        let (_d, sb) = sandbox();
        let root = sb.root();
        assert!(check_artifact(root, DATASET_CSV).is_err());
        write(&sb, DATASET_CSV, "image_path,label\n");
        assert!(check_artifact(root, DATASET_CSV).unwrap_err().contains("split"));
        write(&sb, METRICS_JSON, "{}");
        assert!(check_artifact(root, METRICS_JSON).is_err());
        write(&sb, METRICS_JSON, r#"{"auroc": 0.5}"#);
        assert!(check_artifact(root, METRICS_JSON).is_ok());
        assert_eq!(read_auroc(root), Some(0.5));
    }
}
