//! Run manifests: the resolved inputs of a command, written next to its
//! outputs. Re-running a command from its manifest reproduces the result
//! files byte for byte; wall-clock timing lives only here.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    /// Fully resolved, command-specific parameters.
    pub resolved: Value,
    /// Result files written alongside this manifest.
    pub outputs: Vec<String>,
    /// Wall-clock milliseconds; informational, excluded from the
    /// determinism contract.
    pub elapsed_ms: u128,
}

impl Manifest {
    pub fn new(command: &str, master_seed: u64, resolved: Value) -> Self {
        Manifest {
            tool: "chunksched".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            master_seed,
            resolved,
            outputs: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).context("manifest parse error")
    }
}
