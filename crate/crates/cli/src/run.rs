//! Run-stamped output directories. The manifest goes in first; it is
//! rewritten with the elapsed time when the command finishes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use logpolar_core::experiments::RunManifest;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

pub struct Run {
    pub dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

/// `20261019T093000Z` for the current time.
pub fn utc_stamp(t: SystemTime) -> String {
    humantime::format_rfc3339_seconds(t)
        .to_string()
        .chars()
        .filter(|c| !matches!(c, '-' | ':'))
        .collect()
}

impl Run {
    /// Creates `<out_dir>/<command>-<utc stamp>-<manifest id>`, or exactly
    /// `run_dir` when given (which must be empty or absent), and writes the
    /// manifest there.
    pub fn start(
        out_dir: &Path,
        run_dir: Option<&Path>,
        command: &str,
        seed: u64,
        config: serde_json::Value,
        dataset_checksums: BTreeMap<String, String>,
        threads: usize,
    ) -> Result<Self, CliError> {
        let mut manifest = RunManifest::new(command, seed, config, threads);
        manifest.dataset_checksums = dataset_checksums;
        let dir = match run_dir {
            Some(d) => d.to_path_buf(),
            None => out_dir.join(format!("{command}-{}-{}", utc_stamp(SystemTime::now()), manifest.id())),
        };
        if dir.exists() && std::fs::read_dir(&dir).map_err(CliError::io(&dir))?.next().is_some() {
            return Err(CliError::Usage(format!("run directory {} is not empty", dir.display())));
        }
        std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        manifest.write(&dir.join(MANIFEST))?;
        Ok(Self {
            dir,
            manifest,
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn id(&self) -> String {
        self.manifest.id()
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.manifest.elapsed_seconds = Some(self.started.elapsed().as_secs_f64());
        self.manifest.write(&self.dir.join(MANIFEST))?;
        Ok(self.dir)
    }
}
