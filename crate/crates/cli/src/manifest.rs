use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;
use crate::io::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at_unix: f64,
    pub finished_at_unix: f64,
    pub stage_seconds: BTreeMap<String, f64>,
}

/// Collects stage timings and output paths while a command runs.
#[derive(Debug)]
pub struct Recorder {
    manifest: RunManifest,
    clock: Instant,
}

impl Recorder {
    pub fn start<C: Serialize>(command: &str, seed: u64, config: &C) -> Self {
        Self {
            manifest: RunManifest {
                artifact_version: env!("CARGO_PKG_VERSION"),
                command: command.to_owned(),
                seed,
                config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at_unix: unix_now(),
                finished_at_unix: 0.0,
                stage_seconds: BTreeMap::new(),
            },
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: PathBuf) {
        self.manifest.outputs.push(path);
    }

    /// Runs `f` and records its wall time under `name`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.manifest
            .stage_seconds
            .insert(name.to_owned(), t.elapsed().as_secs_f64());
        out
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        self.manifest.outputs.push(path.clone());
        self.manifest
            .stage_seconds
            .insert("total".to_owned(), self.clock.elapsed().as_secs_f64());
        self.manifest.finished_at_unix = unix_now();
        write_json(&path, &self.manifest)?;
        Ok(path)
    }
}
