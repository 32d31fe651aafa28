//! Per-command manifest: what went in, under which config, and what came out.
//! Files are named, never given as absolute paths, so the manifest itself is
//! reproducible.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed_override: Option<u64>,
    pub inputs: Vec<FileEntry>,
    pub artifacts: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn entry(role: &str, path: &Path, base: Option<&Path>) -> Result<FileEntry, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::runtime(format!("cannot hash {}: {e}", path.display())))?;
    let file = match base.and_then(|b| path.strip_prefix(b).ok()) {
        Some(rel) => rel.to_string_lossy().into_owned(),
        None => path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
    };
    Ok(FileEntry {
        role: role.to_string(),
        file,
        sha256: sha256_hex(&bytes),
    })
}

impl Manifest {
    pub fn new(command: &str, config_bytes: &[u8], seed_override: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_bytes),
            seed_override,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        self.inputs.push(entry(role, path, None)?);
        Ok(())
    }

    /// Records an artifact by its path relative to `out`.
    pub fn artifact(&mut self, role: &str, path: &Path, out: &Path) -> Result<(), CliError> {
        self.artifacts.push(entry(role, path, Some(out))?);
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self).map_err(|e| CliError::runtime(format!("manifest: {e}")))?;
        let path = out.join(format!("{}.manifest.toml", self.command));
        std::fs::write(&path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    }
}
