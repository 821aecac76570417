//! The per-run manifest: what was run, with which settings and inputs, and
//! a digest of every file it produced. It carries no timestamps, host names
//! or thread counts, so identical runs produce identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub seed: Option<u64>,
    pub results: Value,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, inputs: &[&Path], seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            results: Value::Null,
            outputs: Vec::new(),
        }
    }

    /// Hashes `files` and records them relative to `out_dir`, sorted.
    pub fn record_outputs(&mut self, out_dir: &Path, files: &[PathBuf]) -> Result<()> {
        for file in files {
            let bytes = fs::read(file).with_context(|| format!("reading {} for its digest", file.display()))?;
            let rel = file.strip_prefix(out_dir).unwrap_or(file);
            self.outputs.push(OutputDigest {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}
