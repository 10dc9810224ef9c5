//! Run manifests: what was run, with which settings, producing which files.
//!
//! An output file `X` is accompanied by `X.manifest.json`. JSON outputs also
//! carry the manifest file name under a `manifest` key; CSV outputs rely on
//! the sidecar name alone so they stay plain tables.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::settings::Settings;

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: Settings,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
    /// Free-form counters a subcommand wants on record (rejected trials and the like).
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub notes: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, config: Settings) -> Self {
        let inputs = config.curve.iter().cloned().collect();
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed: config.seed,
            config,
            threads: rayon::current_num_threads(),
            inputs,
            outputs: Vec::new(),
            duration_seconds: 0.0,
            notes: serde_json::Map::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.notes.insert(key.to_string(), serde_json::to_value(value).unwrap_or_default());
    }

    /// Writes the manifest next to the first output, if there is one.
    pub fn finish(mut self, elapsed: Duration) -> Result<Option<PathBuf>> {
        self.duration_seconds = elapsed.as_secs_f64();
        let Some(first) = self.outputs.first() else {
            return Ok(None);
        };
        let path = sidecar(first);
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(Some(path))
    }
}

/// `X` -> `X.manifest.json`.
pub fn sidecar(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// File name of the manifest that will accompany `primary`, for embedding in JSON outputs.
pub fn reference(primary: Option<&Path>) -> Option<String> {
    primary.map(|p| sidecar(p).file_name().unwrap_or_default().to_string_lossy().into_owned())
}
