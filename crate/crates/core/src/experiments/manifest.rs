use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::mnist::{locate, read_maybe_gzip, sha256_hex, IdxError, CANONICAL_FILES};

/// How rotation angles in every result file are to be read.
pub const ROTATION_CONVENTION: &str =
    "degrees, counter-clockwise in math axes (clockwise on screen, y pointing down), about pixel centre ((w-1)/2, (h-1)/2); \
     bilinear inverse mapping, zero fill; rotate then scale";

/// Everything needed to rerun a command and get the same numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// Effective configuration after merging config file and flags.
    pub config: serde_json::Value,
    /// Uncompressed SHA-256 per dataset file name.
    pub dataset_checksums: BTreeMap<String, String>,
    pub code_version: String,
    pub rotation_convention: String,
    pub threads: usize,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    /// Filled in when the command finishes.
    pub elapsed_seconds: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            dataset_checksums: BTreeMap::new(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            rotation_convention: ROTATION_CONVENTION.to_string(),
            threads,
            started_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: None,
        }
    }

    /// Short stable identifier derived from the reproducible fields only.
    pub fn id(&self) -> String {
        let key = serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "dataset_checksums": self.dataset_checksums,
            "code_version": self.code_version,
        });
        sha256_hex(key.to_string().as_bytes())[..12].to_string()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), ExperimentError> {
        std::fs::write(path, self.to_json()).map_err(ExperimentError::io(path))
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(ExperimentError::io(path))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::BadSpec(format!("{}: {e}", path.display())))
    }
}

/// SHA-256 of whichever canonical MNIST files are present in `dir`.
pub fn file_checksums(dir: &Path) -> Result<BTreeMap<String, String>, IdxError> {
    let mut out = BTreeMap::new();
    for (name, _) in CANONICAL_FILES {
        let path = locate(dir, name);
        if path.exists() {
            out.insert(name.to_string(), sha256_hex(&read_maybe_gzip(&path)?));
        }
    }
    Ok(out)
}
