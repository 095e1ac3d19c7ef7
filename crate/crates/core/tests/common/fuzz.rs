//! Path fuzzing of the sandboxed tools.

use std::collections::BTreeMap;
use std::fs;
use std::os::unix::fs::symlink;
use std::path::Path;
use std::time::Duration;

use autoiad::tools::{execute, Sandbox, ToolCall, ToolName};
use autoiad::workspace::AgentId;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

const SECRET: &str = "outside-secret-7f3a";

/// Every file under `dir` with its contents, and every directory.
fn snapshot(dir: &Path, skip: &Path, out: &mut BTreeMap<String, Option<Vec<u8>>>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let p = e.path();
        if p == skip {
            continue;
        }
        let key = p.display().to_string();
        let meta = fs::symlink_metadata(&p).unwrap();
        if meta.is_dir() {
            out.insert(key, None);
            snapshot(&p, skip, out);
        } else {
            out.insert(key, Some(fs::read(&p).unwrap_or_default()));
        }
    }
}

fn adversarial_path(rng: &mut ChaCha8Rng, outside_abs: &str) -> String {
    const PARTS: &[&str] = &[
        "..", ".", "", "outside", "secret.txt", "link_out", "link_file", "dangling", "a", "artifacts", "~", "$HOME",
        "%2e%2e", "..\\..", "...", " ..", ".. ", "dataset", "x.py", "new", "\u{0}", "é", "//",
    ];
    let n = rng.random_range(1..6);
    let mut parts: Vec<String> = (0..n).map(|_| PARTS[rng.random_range(0..PARTS.len())].to_string()).collect();
    match rng.random_range(0..6) {
        0 => parts.insert(0, String::new()),
        1 => parts.insert(0, outside_abs.trim_start_matches('/').to_string()),
        2 => return format!("{outside_abs}/{}", parts.join("/")),
        3 => parts.insert(0, "../".repeat(rng.random_range(1..8)).trim_end_matches('/').to_string()),
        _ => {}
    }
    parts.join("/")
}

pub fn call(name: ToolName, path: &str, other: &str) -> ToolCall {
    let args = match name {
        ToolName::ListFiles | ToolName::CreateDirectory => json!({"path": path}),
        ToolName::Tree => json!({"path": path, "max_depth": 3}),
        ToolName::ReadFiles => json!({"paths": [path, other]}),
        ToolName::PreviewFileContent => json!({"path": path, "n_lines": 5}),
        ToolName::WriteToFile => json!({"path": path, "content": "pwned"}),
        ToolName::CopyFile => json!({"src": other, "dst": path}),
        ToolName::RunScript => json!({"path": path, "timeout": 2}),
    };
    let Value::Object(args): Value = args else { unreachable!() };
    ToolCall { name, args: Map::from_iter(args), issued_by: AgentId::Prep }
}

#[derive(Debug)]
pub struct FuzzStats {
    pub paths: usize,
    pub calls: usize,
    pub accepted: usize,
    /// Human-readable violations; empty on success.
    pub violations: Vec<String>,
}

/// Run `n_paths` adversarial paths through all eight tools in a fresh
/// sandbox that sits next to a directory of sentinel files.
pub fn fuzz_sandbox(n_paths: usize, seed: u64) -> FuzzStats {
    let base = tempfile::tempdir().unwrap();
    let base_path = fs::canonicalize(base.path()).unwrap();
    let root = base_path.join("root");
    let outside = base_path.join("outside");
    fs::create_dir_all(root.join("artifacts")).unwrap();
    fs::create_dir_all(root.join("dataset")).unwrap();
    fs::create_dir_all(&outside).unwrap();
    fs::write(outside.join("secret.txt"), SECRET).unwrap();
    fs::write(outside.join("x.py"), "open('escaped', 'w')\n").unwrap();
    fs::write(root.join("a"), "inside").unwrap();
    symlink(&outside, root.join("link_out")).unwrap();
    symlink(outside.join("secret.txt"), root.join("link_file")).unwrap();
    symlink("/nonexistent/autoiad/target", root.join("dangling")).unwrap();

    let mut before = BTreeMap::new();
    snapshot(&base_path, &root, &mut before);
    let sb = Sandbox::new(&root).unwrap().with_script_timeout(Duration::from_secs(5));
    let outside_abs = outside.display().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FuzzStats { paths: 0, calls: 0, accepted: 0, violations: Vec::new() };
    for _ in 0..n_paths {
        let path = adversarial_path(&mut rng, &outside_abs);
        let other = adversarial_path(&mut rng, &outside_abs);
        stats.paths += 1;
        for tool in ToolName::ALL {
            let result = execute(&sb, &call(tool, &path, &other));
            stats.calls += 1;
            stats.accepted += result.ok as usize;
            if result.payload.contains(SECRET) || result.stderr.contains(SECRET) {
                stats.violations.push(format!("{tool:?} {path:?} leaked outside content"));
            }
            for w in &result.written {
                let parent = root.join(w).parent().map(Path::to_path_buf).unwrap_or_else(|| root.clone());
                if !fs::canonicalize(&parent).map(|p| p.starts_with(&root)).unwrap_or(false) {
                    stats.violations.push(format!("{tool:?} wrote {w:?} outside the root"));
                }
            }
        }
    }
    let mut after = BTreeMap::new();
    snapshot(&base_path, &root, &mut after);
    for (k, v) in &after {
        if before.get(k) != Some(v) {
            stats.violations.push(format!("{k} created or modified"));
        }
    }
    for k in before.keys().filter(|k| !after.contains_key(*k)) {
        stats.violations.push(format!("{k} removed"));
    }
    if Path::new("/nonexistent/autoiad").exists() {
        stats.violations.push("dangling symlink target was created".into());
    }
    stats
}
