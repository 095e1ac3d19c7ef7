//! Script execution with a hard timeout and process-group teardown.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::sandbox::Sandbox;
use super::ToolError;

/// How long to wait for pipe readers after the child is gone.
const READER_GRACE: Duration = Duration::from_millis(500);
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptOutput {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub duration: Duration,
    pub timed_out: bool,
}

fn spawn_reader<R: Read + Send + 'static>(mut src: R) -> (Arc<Mutex<Vec<u8>>>, thread::JoinHandle<()>) {
    let buf = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&buf);
    let handle = thread::spawn(move || {
        let mut chunk = [0u8; 8192];
        loop {
            match src.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => sink.lock().expect("reader buffer").extend_from_slice(&chunk[..n]),
            }
        }
    });
    (buf, handle)
}

fn drain(buf: &Arc<Mutex<Vec<u8>>>, handle: thread::JoinHandle<()>, deadline: Instant) -> String {
    while !handle.is_finished() && Instant::now() < deadline {
        thread::sleep(POLL);
    }
    if handle.is_finished() {
        let _ = handle.join();
    }
    let bytes = buf.lock().expect("reader buffer").clone();
    String::from_utf8_lossy(&bytes).into_owned()
}

fn kill_group(pgid: u32) {
    // SAFETY: killpg only sends a signal; a stale pgid yields ESRCH.
    unsafe {
        libc::killpg(pgid as libc::pid_t, libc::SIGKILL);
    }
}

fn interpreter_for(sb: &Sandbox, script: &Path) -> Result<std::ffi::OsString, ToolError> {
    match script.extension().and_then(|e| e.to_str()) {
        Some("py") => Ok(sb.python.clone().into_os_string()),
        Some("sh") => Ok("sh".into()),
        other => Err(ToolError::Spawn(format!(
            "unsupported script type {:?}; expected .py or .sh",
            other.unwrap_or("")
        ))),
    }
}

impl Sandbox {
    /// Run a `.py` or `.sh` script located inside the sandbox.
    ///
    /// The child runs in its own process group with the sandbox root as its
    /// working directory and a filtered environment (`PATH`,
    /// `AUTOIAD_WORKSPACE`, `AUTOIAD_INTERPRETER`). On timeout the whole group
    /// is killed and [`ToolError::Timeout`] carries the partial output.
    pub fn run_script(&self, path: &str, args: &[String], timeout: Duration) -> Result<ScriptOutput, ToolError> {
        if timeout > self.script_timeout {
            return Err(ToolError::Precondition(format!(
                "timeout {:.3}s exceeds sandbox limit {:.3}s",
                timeout.as_secs_f64(),
                self.script_timeout.as_secs_f64()
            )));
        }
        let host = self.resolve(path)?;
        if !host.is_file() {
            return Err(ToolError::NotFound(path.to_string()));
        }
        let interpreter = interpreter_for(self, &host)?;
        let _serial = self.script_lock.lock().unwrap_or_else(|e| e.into_inner());

        let mut cmd = Command::new(&interpreter);
        cmd.arg(&host)
            .args(args)
            .current_dir(self.root())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/local/bin:/usr/bin:/bin".into()))
            .env("AUTOIAD_WORKSPACE", self.root())
            .env("AUTOIAD_INTERPRETER", &self.python)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);

        let start = Instant::now();
        let mut child = cmd
            .spawn()
            .map_err(|e| ToolError::Spawn(format!("{}: {e}", interpreter.to_string_lossy())))?;
        let pgid = child.id();
        let (out_buf, out_handle) = spawn_reader(child.stdout.take().expect("piped stdout"));
        let (err_buf, err_handle) = spawn_reader(child.stderr.take().expect("piped stderr"));

        let deadline = start + timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => break None,
                Ok(None) => thread::sleep(POLL),
                Err(e) => {
                    kill_group(pgid);
                    let _ = child.wait();
                    return Err(ToolError::Spawn(e.to_string()));
                }
            }
        };
        // Reap anything the script left running in its group.
        kill_group(pgid);
        let status = match status {
            Some(s) => Some(s),
            None => {
                let _ = child.wait();
                None
            }
        };
        let reader_deadline = Instant::now() + READER_GRACE;
        let stdout = drain(&out_buf, out_handle, reader_deadline);
        let stderr = drain(&err_buf, err_handle, reader_deadline);
        let output = ScriptOutput {
            exit_code: status.and_then(|s| s.code()),
            stdout,
            stderr,
            duration: start.elapsed(),
            timed_out: status.is_none(),
        };
        if output.timed_out {
            Err(ToolError::Timeout(Box::new(output)))
        } else {
            Ok(output)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn sandbox() -> (tempfile::TempDir, Sandbox) {
        let dir = tempfile::tempdir().unwrap();
        let sb = Sandbox::new(dir.path()).unwrap();
        (dir, sb)
    }

    #[test]
    fn hello_script() {
        let (_d, sb) = sandbox();
        fs::write(sb.root().join("hello.sh"), "echo hello\n").unwrap();
        let out = sb.run_script("hello.sh", &[], Duration::from_secs(10)).unwrap();
        assert_eq!(out.stdout, "hello\n");
        assert_eq!(out.exit_code, Some(0));
        assert!(!out.timed_out);
    }

    #[test]
    fn args_env_and_cwd() {
        let (_d, sb) = sandbox();
        fs::write(
            sb.root().join("env.sh"),
            "echo \"$1 $2\"; pwd; echo \"ws=$AUTOIAD_WORKSPACE\"; echo \"home=${HOME:-unset}\"; exit 3\n",
        )
        .unwrap();
        let out = sb.run_script("env.sh", &["a".into(), "b".into()], Duration::from_secs(10)).unwrap();
        let root = sb.root().display().to_string();
        assert_eq!(out.stdout, format!("a b\n{root}\nws={root}\nhome=unset\n"));
        assert_eq!(out.exit_code, Some(3));
    }

    #[test]
    fn missing_and_unsupported() {
        let (_d, sb) = sandbox();
        assert!(matches!(sb.run_script("nope.py", &[], Duration::from_secs(1)), Err(ToolError::NotFound(_))));
        fs::write(sb.root().join("x.rb"), "puts 1").unwrap();
        assert!(matches!(sb.run_script("x.rb", &[], Duration::from_secs(1)), Err(ToolError::Spawn(_))));
        assert!(matches!(
            sb.run_script("../x.sh", &[], Duration::from_secs(1)),
            Err(ToolError::SandboxViolation(_))
        ));
        let sb = sb.with_script_timeout(Duration::from_secs(1));
        assert!(matches!(
            sb.run_script("x.rb", &[], Duration::from_secs(2)),
            Err(ToolError::Precondition(_))
        ));
    }

    #[test]
    fn timeout_kills_process_tree() {
        let (_d, sb) = sandbox();
        // The background child would outlive a plain kill of the shell.
        fs::write(
            sb.root().join("sleepy.sh"),
            "echo started\nsleep 10 &\necho $! > bg.pid\nsleep 10\n",
        )
        .unwrap();
        let err = sb.run_script("sleepy.sh", &[], Duration::from_secs(1)).unwrap_err();
        let ToolError::Timeout(out) = err else { panic!("expected timeout, got {err:?}") };
        let secs = out.duration.as_secs_f64();
        assert!((1.0..=2.0).contains(&secs), "duration {secs}");
        assert_eq!(out.stdout, "started\n");
        assert!(out.timed_out);
        let pid: u32 = fs::read_to_string(sb.root().join("bg.pid")).unwrap().trim().parse().unwrap();
        thread::sleep(Duration::from_millis(100));
        let alive = fs::read_to_string(format!("/proc/{pid}/stat"))
            .map(|stat| !stat.contains(") Z"))
            .unwrap_or(false);
        assert!(!alive, "background process {pid} survived");
    }
}
