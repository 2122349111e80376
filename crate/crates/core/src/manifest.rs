//! Content hashes and per-stage manifests.
//!
//! Manifests carry no wall-clock time, so identical inputs and configuration
//! give byte-identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Git-style object hash: SHA-256 over `blob <len>\0<content>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(&bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    /// `running` while the command works, `complete` once outputs are final.
    pub status: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config_fingerprint: &str, seeds: &[u64]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_fingerprint: config_fingerprint.into(),
            seeds: seeds.to_vec(),
            status: "running".into(),
            ..Default::default()
        }
    }

    pub fn add_input(&mut self, name: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), file_hash(path)?);
        Ok(())
    }

    /// Writes `contents` to `dir/name` and records its hash.
    pub fn write_output(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.outputs.insert(name.into(), content_hash(contents.as_bytes()));
        Ok(())
    }

    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs.insert(name.into(), file_hash(&dir.join(name))?);
        Ok(())
    }

    /// Creates `dir` and writes the manifest in its running state.
    pub fn begin(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.save(dir)
    }

    pub fn finish(&mut self, dir: &Path) -> Result<()> {
        self.status = "complete".into();
        self.save(dir)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
    }
}
