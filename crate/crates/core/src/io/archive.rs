//! Self-contained run archives, written atomically. Wall-clock metadata goes
//! to a separate sidecar so the archive itself is byte-reproducible.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::config::{self, Problem, SCHEMA_VERSION};
use super::runner::{self, RunOutcome};
use super::IoError;

pub const ARCHIVE_FILE: &str = "archive.json";
pub const META_FILE: &str = "run_meta.json";
pub const TOOL: &str = "qmorse";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `ok`, `violations` (the check suite found failures) or `failed`.
pub fn status(outcome: &RunOutcome) -> &'static str {
    if outcome.error.is_some() {
        "failed"
    } else if !outcome.violations.is_empty() {
        "violations"
    } else {
        "ok"
    }
}

pub fn build_archive(problem: &Problem, outcome: &RunOutcome) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "schema_version": SCHEMA_VERSION,
        "kind": problem.config.experiment.kind(),
        "config": serde_json::to_value(&problem.config).expect("config serializes"),
        "status": status(outcome),
        "error": outcome.error,
        "warnings": problem.warnings.iter().chain(&outcome.warnings).collect::<Vec<_>>(),
        "violations": outcome.violations,
        "outputs": outcome.outputs,
    })
}

/// Serialized archive text; identical inputs give identical bytes.
pub fn archive_text(archive: &Value) -> String {
    let mut s = serde_json::to_string_pretty(archive).expect("archive serializes");
    s.push('\n');
    s
}

/// Write `bytes` to a temporary file next to `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(IoError::io(path, e));
    }
    Ok(())
}

pub fn write_archive(dir: &Path, archive: &Value) -> Result<PathBuf, IoError> {
    let path = dir.join(ARCHIVE_FILE);
    write_atomic(&path, archive_text(archive).as_bytes())?;
    Ok(path)
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO).as_secs_f64()
}

/// Wall-clock sidecar for a run.
pub fn write_meta(dir: &Path, started: SystemTime, finished: SystemTime, threads: usize) -> Result<PathBuf, IoError> {
    let meta = json!({
        "started_unix": unix_seconds(started),
        "finished_unix": unix_seconds(finished),
        "elapsed_seconds": finished.duration_since(started).unwrap_or(Duration::ZERO).as_secs_f64(),
        "threads": threads,
        "version": VERSION,
    });
    let path = dir.join(META_FILE);
    write_atomic(&path, archive_text(&meta).as_bytes())?;
    Ok(path)
}

pub fn read_archive(path: &Path) -> Result<Value, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::Json { path: path.to_path_buf(), message: e.to_string() })
}

/// Re-run the configuration embedded in an archive.
pub fn rerun(archive: &Value) -> Result<Value, IoError> {
    let cfg = archive.get("config").ok_or_else(|| IoError::Missing("config".into()))?;
    let problem = config::load(&cfg.to_string())?;
    let outcome = runner::run(&problem);
    Ok(build_archive(&problem, &outcome))
}

/// Load, validate and run a configuration text.
pub fn run_text(text: &str) -> Result<(Problem, RunOutcome, Value), IoError> {
    let problem = config::load(text)?;
    let outcome = runner::run(&problem);
    let archive = build_archive(&problem, &outcome);
    Ok((problem, outcome, archive))
}
