//! Result files and the run manifest.
//!
//! Everything is rendered in memory first and then written in one pass; if
//! a write fails, the files already written are removed again.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One output file, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(path: impl Into<String>, text: String) -> Self {
        Self { path: path.into(), bytes: text.into_bytes() }
    }

    pub fn json<T: Serialize>(path: impl Into<String>, value: &T) -> Result<Self, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        Ok(Self::text(path, text))
    }
}

/// CSV with a header row; every value is written with `Display`.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Timestamps are always null so reruns are byte-identical.
#[derive(Debug, Default, Serialize)]
pub struct Timestamps {
    pub started: Option<String>,
    pub finished: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub command: String,
    /// SHA-256 of the effective configuration (every input affecting results).
    pub config_digest: String,
    pub seed: u64,
    pub timestamps: Timestamps,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(command: &str, effective_config: &[u8], seed: u64, artifacts: &[Artifact]) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION,
            command: command.into(),
            config_digest: sha256_hex(effective_config),
            seed,
            timestamps: Timestamps::default(),
            files: artifacts
                .iter()
                .map(|a| FileEntry { path: a.path.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() })
                .collect(),
        }
    }
}

/// Writes the artifacts and `manifest.json` under `out`.
pub fn persist(out: &Path, manifest: &RunManifest, artifacts: &[Artifact]) -> Result<(), CliError> {
    let manifest = Artifact::json("manifest.json", manifest)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = artifacts.iter().chain(std::iter::once(&manifest)).try_for_each(|a| {
        let path = out.join(&a.path);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, &a.bytes)?;
        written.push(path);
        Ok::<(), std::io::Error>(())
    });
    result.map_err(|e| {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        CliError::Runtime(format!("writing results to {}: {e}", out.display()))
    })
}
