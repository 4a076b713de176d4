//! Run manifests: the configuration echo, derived seeds and artifact hashes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Seeds};
use super::write_atomic;
use crate::error::Result;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub grid_fingerprint: Option<String>,
    /// File name to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
    /// Scalar results worth keeping next to the artifacts (e.g. `lambda_max`).
    pub values: BTreeMap<String, f64>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            command: command.to_string(),
            config: config.clone(),
            seeds: config.seeds(),
            grid_fingerprint: None,
            artifacts: BTreeMap::new(),
            values: BTreeMap::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn record(&mut self, name: &str, hash: String) {
        self.artifacts.insert(name.to_string(), hash);
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}
