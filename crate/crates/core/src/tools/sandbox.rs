//! Filesystem tools confined to a sandbox root.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use super::ToolError;

pub const DEFAULT_SCRIPT_TIMEOUT: Duration = Duration::from_secs(300);
pub const DEFAULT_MAX_READ_BYTES: u64 = 4 * 1024 * 1024;

/// Lexically normalize a relative path. Returns `None` for absolute paths,
/// paths that climb above their starting point, and paths containing NUL.
pub fn normalize_relative(rel: &str) -> Option<PathBuf> {
    if rel.contains('\0') {
        return None;
    }
    let mut out = PathBuf::new();
    for comp in Path::new(rel).components() {
        match comp {
            Component::CurDir => {}
            Component::Normal(s) => out.push(s),
            Component::ParentDir => {
                if !out.pop() {
                    return None;
                }
            }
            Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    Some(out)
}

#[derive(Debug)]
pub struct Sandbox {
    root: PathBuf,
    pub script_timeout: Duration,
    pub max_read_bytes: u64,
    /// Interpreter used for `.py` scripts.
    pub python: PathBuf,
    pub(crate) script_lock: Mutex<()>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    File,
    Dir,
    Symlink,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirEntry {
    pub name: String,
    pub kind: EntryKind,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileContent {
    pub bytes: Vec<u8>,
    pub binary: bool,
}

impl FileContent {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.bytes).into_owned()
    }
}

#[derive(Debug)]
pub struct ReadOutcome {
    pub path: String,
    pub result: Result<FileContent, ToolError>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn kind_of(meta: &fs::Metadata) -> EntryKind {
    let ft = meta.file_type();
    if ft.is_symlink() {
        EntryKind::Symlink
    } else if ft.is_dir() {
        EntryKind::Dir
    } else if ft.is_file() {
        EntryKind::File
    } else {
        EntryKind::Other
    }
}

fn io_err(path: &str, e: io::Error) -> ToolError {
    if e.kind() == io::ErrorKind::NotFound {
        ToolError::NotFound(path.to_string())
    } else {
        ToolError::Io(format!("{path}: {e}"))
    }
}

impl Sandbox {
    pub fn new(root: impl AsRef<Path>) -> Result<Self, ToolError> {
        let root = fs::canonicalize(root.as_ref())
            .map_err(|e| ToolError::Io(format!("sandbox root {}: {e}", root.as_ref().display())))?;
        Ok(Sandbox {
            root,
            script_timeout: DEFAULT_SCRIPT_TIMEOUT,
            max_read_bytes: DEFAULT_MAX_READ_BYTES,
            python: PathBuf::from("python3"),
            script_lock: Mutex::new(()),
        })
    }

    pub fn with_script_timeout(mut self, timeout: Duration) -> Self {
        self.script_timeout = timeout;
        self
    }

    pub fn with_max_read_bytes(mut self, limit: u64) -> Self {
        self.max_read_bytes = limit;
        self
    }

    pub fn with_python(mut self, python: impl Into<PathBuf>) -> Self {
        self.python = python.into();
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolve `rel` to a host path inside the root. Rejects absolute paths,
    /// lexical escapes, and any existing component that is a symlink whose
    /// target leaves the root (dangling symlinks included).
    pub fn resolve(&self, rel: &str) -> Result<PathBuf, ToolError> {
        let norm = normalize_relative(rel).ok_or_else(|| ToolError::SandboxViolation(rel.to_string()))?;
        let mut cur = self.root.clone();
        for comp in norm.components() {
            cur.push(comp);
            match fs::symlink_metadata(&cur) {
                Ok(meta) if meta.file_type().is_symlink() => match fs::canonicalize(&cur) {
                    Ok(target) if target.starts_with(&self.root) => {}
                    _ => return Err(ToolError::SandboxViolation(rel.to_string())),
                },
                Ok(_) => {}
                Err(_) => break,
            }
        }
        Ok(self.root.join(norm))
    }

    /// Root-relative display form of a resolved path.
    pub fn relative(&self, host: &Path) -> String {
        host.strip_prefix(&self.root)
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_else(|_| host.to_string_lossy().into_owned())
    }

    fn sorted_entries(&self, dir: &Path, rel: &str) -> Result<Vec<(DirEntry, PathBuf)>, ToolError> {
        let meta = fs::symlink_metadata(dir).map_err(|e| io_err(rel, e))?;
        if !meta.is_dir() {
            return Err(ToolError::NotADirectory(rel.to_string()));
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| io_err(rel, e))? {
            let entry = entry.map_err(|e| io_err(rel, e))?;
            let meta = entry.path().symlink_metadata().map_err(|e| io_err(rel, e))?;
            let kind = kind_of(&meta);
            out.push((
                DirEntry {
                    name: entry.file_name().to_string_lossy().into_owned(),
                    kind,
                    size: if kind == EntryKind::File { meta.len() } else { 0 },
                },
                entry.path(),
            ));
        }
        out.sort_by(|a, b| a.0.name.as_bytes().cmp(b.0.name.as_bytes()));
        Ok(out)
    }

    pub fn list_files(&self, dir: &str) -> Result<Vec<DirEntry>, ToolError> {
        let host = self.resolve(dir)?;
        Ok(self.sorted_entries(&host, dir)?.into_iter().map(|(e, _)| e).collect())
    }

    /// Depth-limited tree rendering with a trailing `N directories, M files` line.
    pub fn tree(&self, dir: &str, max_depth: usize) -> Result<String, ToolError> {
        if max_depth == 0 {
            return Err(ToolError::Precondition("max_depth must be >= 1".into()));
        }
        let host = self.resolve(dir)?;
        let meta = fs::symlink_metadata(&host).map_err(|e| io_err(dir, e))?;
        let label = match normalize_relative(dir).and_then(|p| p.file_name().map(|s| s.to_string_lossy().into_owned())) {
            Some(name) => name,
            None => ".".to_string(),
        };
        if !meta.is_dir() {
            let files = usize::from(meta.is_file() || meta.file_type().is_symlink());
            return Ok(format!("{label}\n\n0 directories, {files} files\n"));
        }
        let mut out = format!("{label}/\n");
        let (mut dirs, mut files) = (0usize, 0usize);
        self.render_tree(&host, dir, "", 1, max_depth, &mut out, &mut dirs, &mut files)?;
        out.push_str(&format!("\n{dirs} directories, {files} files\n"));
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn render_tree(
        &self,
        host: &Path,
        rel: &str,
        prefix: &str,
        depth: usize,
        max_depth: usize,
        out: &mut String,
        dirs: &mut usize,
        files: &mut usize,
    ) -> Result<(), ToolError> {
        let entries = self.sorted_entries(host, rel)?;
        let n = entries.len();
        for (i, (entry, path)) in entries.into_iter().enumerate() {
            let last = i + 1 == n;
            let branch = if last { "└── " } else { "├── " };
            if entry.kind == EntryKind::Dir {
                *dirs += 1;
                out.push_str(&format!("{prefix}{branch}{}/\n", entry.name));
                if depth < max_depth {
                    let child_prefix = format!("{prefix}{}", if last { "    " } else { "│   " });
                    let child_rel = format!("{rel}/{}", entry.name);
                    self.render_tree(&path, &child_rel, &child_prefix, depth + 1, max_depth, out, dirs, files)?;
                }
            } else {
                *files += 1;
                out.push_str(&format!("{prefix}{branch}{}\n", entry.name));
            }
        }
        Ok(())
    }

    fn read_one(&self, path: &str) -> Result<FileContent, ToolError> {
        let host = self.resolve(path)?;
        let meta = fs::metadata(&host).map_err(|e| io_err(path, e))?;
        if meta.is_dir() {
            return Err(ToolError::Io(format!("{path}: is a directory")));
        }
        if meta.len() > self.max_read_bytes {
            return Err(ToolError::TooLarge { path: path.to_string(), size: meta.len(), limit: self.max_read_bytes });
        }
        let bytes = fs::read(&host).map_err(|e| io_err(path, e))?;
        let binary = bytes.contains(&0) || std::str::from_utf8(&bytes).is_err();
        Ok(FileContent { bytes, binary })
    }

    /// Per-path results, in request order.
    pub fn read_files(&self, paths: &[String]) -> Vec<ReadOutcome> {
        paths
            .iter()
            .map(|p| ReadOutcome { path: p.clone(), result: self.read_one(p) })
            .collect()
    }

    /// The first `n_lines` lines of a file, byte-exact (line terminators kept).
    pub fn preview_file_content(&self, path: &str, n_lines: usize) -> Result<String, ToolError> {
        if n_lines == 0 {
            return Err(ToolError::Precondition("n_lines must be >= 1".into()));
        }
        let host = self.resolve(path)?;
        let file = fs::File::open(&host).map_err(|e| io_err(path, e))?;
        if file.metadata().map(|m| m.is_dir()).unwrap_or(false) {
            return Err(ToolError::Io(format!("{path}: is a directory")));
        }
        let mut reader = BufReader::new(file.take(self.max_read_bytes));
        let mut buf = Vec::new();
        for _ in 0..n_lines {
            let read = reader.read_until(b'\n', &mut buf).map_err(|e| io_err(path, e))?;
            if read == 0 {
                break;
            }
        }
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    pub fn create_directory(&self, path: &str) -> Result<(), ToolError> {
        let host = self.resolve(path)?;
        fs::create_dir_all(&host).map_err(|e| io_err(path, e))
    }

    /// Replace the file at `path` with `content`. The write goes to a sibling
    /// temporary file that is renamed over the target, so a hard-linked target
    /// is detached rather than modified in place.
    pub fn write_to_file(&self, path: &str, content: &[u8]) -> Result<(), ToolError> {
        let host = self.resolve(path)?;
        let Some(name) = host.file_name() else {
            return Err(ToolError::Io(format!("{path}: not a file path")));
        };
        if host.is_dir() {
            return Err(ToolError::Io(format!("{path}: is a directory")));
        }
        let parent = host.parent().expect("resolved path has a parent");
        fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        // Parent creation may have walked through components created
        // concurrently; re-check containment before writing.
        self.resolve(path)?;
        let tmp = parent.join(format!(
            ".{}.tmp-{}-{}",
            name.to_string_lossy(),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(content)?;
            f.sync_all()?;
            fs::rename(&tmp, &host)
        })();
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(io_err(path, e));
        }
        Ok(())
    }

    pub fn copy_file(&self, src: &str, dst: &str) -> Result<(), ToolError> {
        let src_host = self.resolve(src)?;
        self.resolve(dst)?;
        let meta = fs::metadata(&src_host).map_err(|e| io_err(src, e))?;
        if !meta.is_file() {
            return Err(ToolError::Io(format!("{src}: not a regular file")));
        }
        let bytes = fs::read(&src_host).map_err(|e| io_err(src, e))?;
        self.write_to_file(dst, &bytes)
    }
}
