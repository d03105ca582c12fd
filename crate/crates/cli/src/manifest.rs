//! Run manifest: configuration snapshot, stage timings and output checksums.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use uq_core::synth::SimulationReport;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub wall_time_seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub exit_code: i32,
    pub config: ExperimentConfig,
    /// Noise level and realized SNR of a simulated observation.
    pub simulation: Option<SimulationReport>,
    pub stages: Vec<StageTiming>,
    /// Every output except the manifest, sorted by path.
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Running,
            error: None,
            exit_code: 0,
            config: config.clone(),
            simulation: None,
            stages: Vec::new(),
            files: Vec::new(),
        }
    }

    /// Runs `f` as a named stage and records its wall time.
    pub fn stage<R>(&mut self, name: &str, f: impl FnOnce() -> CliResult<R>) -> CliResult<R> {
        let clock = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            name: name.to_string(),
            wall_time_seconds: clock.elapsed().as_secs_f64(),
            ok: out.is_ok(),
        });
        out
    }

    pub fn finish(&mut self, result: &CliResult<()>) {
        match result {
            Ok(()) => self.status = RunStatus::Ok,
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
                self.exit_code = e.exit_code();
            }
        }
    }

    /// Checksums the files under `dir` and writes the manifest there.
    pub fn write(&mut self, dir: &Path) -> CliResult<PathBuf> {
        self.files = inventory(dir)?;
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|source| file_error(&path, source))?;
        Ok(path)
    }
}

pub fn file_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::File { path: path.display().to_string(), source }
}

pub fn sha256_file(path: &Path) -> CliResult<(u64, String)> {
    let bytes = std::fs::read(path).map_err(|e| file_error(path, e))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

/// Regular files below `dir` except the manifest, sorted by relative path.
pub fn inventory(dir: &Path) -> CliResult<Vec<FileEntry>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| file_error(&d, e))? {
            let entry = entry.map_err(|e| file_error(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_NAME {
                continue;
            }
            let (bytes, sha256) = sha256_file(&path)?;
            out.push(FileEntry { path: rel, bytes, sha256 });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_skips_manifest_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "b").unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/a.txt"), "").unwrap();
        std::fs::write(dir.path().join(MANIFEST_NAME), "{}").unwrap();
        let inv = inventory(dir.path()).unwrap();
        let names: Vec<&str> = inv.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["b.txt", "sub/a.txt"]);
        assert_eq!(inv[1].sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(inv[0].bytes, 1);
    }

    #[test]
    fn failed_stage_is_recorded() {
        let cfg = ExperimentConfig::from_toml("experiment = \"asymptotics\"\n").unwrap();
        let mut m = RunManifest::new(&cfg);
        let r: CliResult<()> = m.stage("bad", || Err(CliError::config("nope")));
        m.finish(&r);
        assert_eq!(m.status, RunStatus::Failed);
        assert_eq!(m.exit_code, 2);
        assert!(!m.stages[0].ok);
    }
}
