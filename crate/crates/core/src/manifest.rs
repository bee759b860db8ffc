//! Checksummed record of the files an output directory holds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config_hash: String,
    /// Path relative to the output directory, mapped to its SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(config_hash: String) -> Self {
        Self { crate_version: env!("CARGO_PKG_VERSION").into(), config_hash, files: BTreeMap::new() }
    }

    /// The manifest in `dir`, or `None` if there is none.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::format(&path, e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Hashes `dir/rel` and stores the digest.
    pub fn record(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let digest = sha256_file(&dir.join(rel))?;
        self.files.insert(rel.to_string(), digest);
        Ok(())
    }

    /// Whether `dir/rel` exists and still matches its recorded digest.
    pub fn verify(&self, dir: &Path, rel: &str) -> bool {
        match (self.files.get(rel), sha256_file(&dir.join(rel))) {
            (Some(want), Ok(got)) => *want == got,
            _ => false,
        }
    }

    /// Every recorded file under `prefix` still matches; false if there are none.
    pub fn verify_prefix(&self, dir: &Path, prefix: &str) -> bool {
        let mut any = false;
        for rel in self.files.keys().filter(|k| k.starts_with(prefix)) {
            any = true;
            if !self.verify(dir, rel) {
                return false;
            }
        }
        any
    }
}
