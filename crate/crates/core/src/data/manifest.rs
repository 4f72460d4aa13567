//! Run manifests: which inputs produced which artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, DataError};
use crate::util::sha256_hex;

pub fn file_sha256(path: &Path) -> Result<String, DataError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHash {
    /// Path as given on the command line or relative to the output directory.
    pub path: String,
    pub sha256: String,
}

impl ArtifactHash {
    pub fn of(path: &Path) -> Result<Self, DataError> {
        Ok(ArtifactHash {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        })
    }
}

/// One stage of the checkpoint lineage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// `pretrain`, `joint` or `finetune`.
    pub stage: String,
    pub checkpoint: ArtifactHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration as canonical JSON.
    pub config_hash: String,
    pub inputs: Vec<ArtifactHash>,
    pub outputs: Vec<ArtifactHash>,
    /// Checkpoints from the earliest stage to this run's.
    pub lineage: Vec<StageRecord>,
    /// Free-form checks, e.g. frozen-block hashes before and after training.
    pub checks: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_json: &str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: sha256_hex(config_json.as_bytes()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            lineage: Vec::new(),
            checks: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_json()).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::CorruptFile(format!("{}: {e}", path.display())))
    }

    /// Re-hashes every referenced file. Relative paths resolve against `base`.
    pub fn verify(&self, base: &Path) -> Result<(), DataError> {
        let all = self
            .inputs
            .iter()
            .chain(&self.outputs)
            .chain(self.lineage.iter().map(|s| &s.checkpoint));
        for a in all {
            let p = Path::new(&a.path);
            let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            let h = file_sha256(&p)?;
            if h != a.sha256 {
                return Err(DataError::CorruptFile(format!("{} hash changed", a.path)));
            }
        }
        Ok(())
    }
}
