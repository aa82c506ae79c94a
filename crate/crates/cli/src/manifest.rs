use std::path::Path;
use std::time::Duration;

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::output::Format;

pub const MANIFEST_FILE: &str = "manifest.json";

/// One written file, identified by name and content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Record of a run. Feeding it back through `--config` reproduces every
/// listed output byte for byte; only `wall_time_s` differs between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Fully resolved command parameters.
    pub params: Value,
    pub seed: u64,
    pub jobs: usize,
    pub format: Format,
    pub gnuplot: bool,
    pub outputs: Vec<OutputEntry>,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &str,
        params: Value,
        seed: u64,
        jobs: usize,
        format: Format,
        gnuplot: bool,
        files: &[(String, Vec<u8>)],
        wall: Duration,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            params,
            seed,
            jobs,
            format,
            gnuplot,
            outputs: files
                .iter()
                .map(|(path, bytes)| OutputEntry {
                    path: path.clone(),
                    bytes: bytes.len(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
            wall_time_s: wall.as_secs_f64(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Files in `dir` whose contents no longer match the recorded hashes.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|e| {
                std::fs::read(dir.join(&e.path))
                    .map(|b| sha256_hex(&b) != e.sha256)
                    .unwrap_or(true)
            })
            .map(|e| e.path.clone())
            .collect()
    }
}
