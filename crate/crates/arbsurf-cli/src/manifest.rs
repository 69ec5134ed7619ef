//! Run manifests: every command records the SHA-256 digests of its inputs
//! and outputs (plus the effective configuration), keyed by the path
//! strings from the configuration, so a rerun is verifiable file by file.
//! Manifests carry no timestamps or machine state: identical (config,
//! seed, inputs) produce byte-identical manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(command: &str, seed: u64, canonical_config: &str) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Records an input file under its configuration-relative label.
    pub fn input(&mut self, label: &Path, resolved: &Path) -> Result<()> {
        self.inputs
            .insert(label.display().to_string(), file_digest(resolved)?);
        Ok(())
    }

    /// Records an output file under its configuration-relative label.
    pub fn output(&mut self, label: &Path, resolved: &Path) -> Result<()> {
        self.outputs
            .insert(label.display().to_string(), file_digest(resolved)?);
        Ok(())
    }

    /// Writes `manifest-<command>.json` into the report directory.
    pub fn write(&self, report_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(report_dir)
            .with_context(|| format!("cannot create {}", report_dir.display()))?;
        let path = report_dir.join(format!("manifest-{}.json", self.command));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
