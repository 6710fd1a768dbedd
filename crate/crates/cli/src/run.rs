//! Run directories and manifests.
//!
//! A run lives in `<out>/<command>-<id>` where `id` is the first 12 hex
//! digits of a digest over the command, its arguments, the effective
//! config and the input digests. The manifest is written last, through a
//! temporary file and a rename.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub args: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub config: &'a PipelineConfig,
    pub inputs: &'a [FileDigest],
    pub artifacts: Vec<FileDigest>,
    pub timings: &'static str,
}

#[derive(Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path, shown: String) -> Result<FileDigest, CliError> {
    let raw = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: shown,
        sha256: sha256_hex(&raw),
        bytes: raw.len() as u64,
    })
}

/// Every regular file under `path` (or `path` itself), sorted.
pub fn walk_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(CliError::Data(format!("{} does not exist", path.display())));
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if entry.file_type().is_file() {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn display(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

pub struct Run {
    dir: PathBuf,
    command: &'static str,
    args: String,
    config: PipelineConfig,
    inputs: Vec<FileDigest>,
    artifacts: Vec<PathBuf>,
    timings: Vec<Timing>,
    started: Instant,
}

impl Run {
    pub fn start(command: &'static str, args: String, config: &PipelineConfig, inputs: &[&Path]) -> Result<Self, CliError> {
        let mut digests = Vec::new();
        for input in inputs {
            // wall-clock sidecars of upstream runs would make the id irreproducible
            for f in walk_files(input)?.into_iter().filter(|f| !f.ends_with(TIMINGS)) {
                digests.push(digest_file(&f, display(&f))?);
            }
        }
        let identity = serde_json::json!({
            "command": command,
            "args": args,
            "config": config,
            "inputs": digests,
        });
        let id = sha256_hex(identity.to_string().as_bytes());
        let dir = config.out.join(format!("{command}-{}", &id[..12]));
        if dir.exists() {
            warn!("replacing earlier identical run in {}", dir.display());
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        info!("{command}: run directory {}", dir.display());
        Ok(Self {
            dir,
            command,
            args,
            config: config.clone(),
            inputs: digests,
            artifacts: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Absolute target for a run-relative path, creating parent dirs.
    pub fn path(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(p)
    }

    /// Records a file written by a library call.
    pub fn track(&mut self, rel: &str) {
        self.artifacts.push(PathBuf::from(rel));
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.path(rel)?;
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.track(rel);
        Ok(p)
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.timings.push(Timing {
            stage: "total".into(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        let timings = serde_json::to_string_pretty(&self.timings).expect("plain data");
        fs::write(self.dir.join(TIMINGS), timings).map_err(|e| CliError::io(&self.dir, e))?;

        self.artifacts.sort();
        self.artifacts.dedup();
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for rel in &self.artifacts {
            artifacts.push(digest_file(&self.dir.join(rel), display(rel))?);
        }
        let config_json = serde_json::to_string(&self.config).expect("plain data");
        let manifest = RunManifest {
            command: self.command,
            args: &self.args,
            config_hash: sha256_hex(config_json.as_bytes()),
            seed: self.config.seed,
            config: &self.config,
            inputs: &self.inputs,
            artifacts,
            timings: TIMINGS,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("plain data");
        let tmp = self.dir.join(format!("{MANIFEST}.tmp"));
        fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        let dst = self.dir.join(MANIFEST);
        fs::rename(&tmp, &dst).map_err(|e| CliError::io(&dst, e))?;
        Ok(self.dir)
    }
}
