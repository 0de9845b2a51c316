//! Run manifests: what a stage read, what it wrote, and under which config.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::workspace::Workspace;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub tool_version: String,
    /// Workspace-relative path -> SHA-256 of every file the stage read.
    pub inputs: BTreeMap<String, String>,
    /// Workspace-relative path -> SHA-256 of every file the stage wrote.
    pub artifacts: BTreeMap<String, String>,
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of workspace-relative files.
pub fn digest_all<'a>(
    ws: &Workspace,
    files: impl IntoIterator<Item = &'a String>,
) -> Result<BTreeMap<String, String>, CliError> {
    files
        .into_iter()
        .map(|rel| Ok((rel.clone(), sha256_file(&ws.path(rel))?)))
        .collect()
}

impl RunManifest {
    pub fn read(ws: &Workspace, stage: &str) -> Result<Option<Self>, CliError> {
        let rel = Workspace::manifest(stage);
        if !ws.exists(&rel) {
            return Ok(None);
        }
        let text = ws.read_to_string(&rel)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::runtime(format!("manifest {rel}"), e))
    }

    pub fn write(&self, ws: &Workspace) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        ws.write(&Workspace::manifest(&self.stage), &bytes)
    }

    /// True when re-running would reproduce exactly what is on disk: same
    /// config, same inputs, and every artifact still present and unchanged.
    pub fn is_current(&self, ws: &Workspace, config_hash: &str, inputs: &BTreeMap<String, String>) -> bool {
        if self.config_hash != config_hash || &self.inputs != inputs || self.tool_version != TOOL_VERSION {
            return false;
        }
        self.artifacts
            .iter()
            .all(|(rel, digest)| sha256_file(&ws.path(rel)).map(|d| &d == digest).unwrap_or(false))
    }
}
