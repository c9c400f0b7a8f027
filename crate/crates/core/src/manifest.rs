//! Provenance records written next to every output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Profile;

/// Version of the CSV/JSON layouts. Bumped on any column or key change.
pub const SCHEMA_VERSION: &str = "1";

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub tool_version: String,
    pub command: String,
    /// Full configuration snapshot.
    pub config: serde_json::Value,
    /// Generator and parameters, or file path, of the initial data.
    pub input: serde_json::Value,
    /// SHA-256 over the configuration, the input descriptor and the sampled
    /// initial profile, hex encoded.
    pub content_hash: String,
    /// Paths of written files, relative to the output directory.
    pub outputs: Vec<String>,
}

/// SHA-256 of the node values, little-endian bytes.
pub fn profile_hash(p: &Profile) -> String {
    let mut h = Sha256::new();
    for v in p.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &impl Serialize,
        input: serde_json::Value,
        profiles: &[&Profile],
    ) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Parse(e.to_string()))?;
        // serde_json maps are ordered by key, so this rendering is canonical
        let mut h = Sha256::new();
        h.update(config.to_string().as_bytes());
        h.update(input.to_string().as_bytes());
        for p in profiles {
            h.update(profile_hash(p).as_bytes());
        }
        Ok(RunManifest {
            schema_version: SCHEMA_VERSION.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config,
            input,
            content_hash: hex::encode(h.finalize()),
            outputs: Vec::new(),
        })
    }

    pub fn add_output(&mut self, rel: impl Into<String>) {
        let rel = rel.into();
        if !self.outputs.contains(&rel) {
            self.outputs.push(rel);
        }
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}
