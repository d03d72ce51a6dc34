//! Run directories, content-addressed run ids, atomic persistence.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use curvctmc_core::verify::CheckResult;
use curvctmc_core::Result;

use crate::config::ExperimentConfig;

/// Twelve hex characters of the digest of the merged config snapshot.
/// Two invocations land in the same directory exactly when nothing that
/// could change their outputs differs, so reruns overwrite in place and
/// edited configs get fresh directories.
pub fn run_id(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

/// One run's output directory.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, id: &str) -> Result<Self> {
        let path = root.join(id);
        fs::create_dir_all(&path)?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes through a sibling temp file and a rename, so an interrupted
    /// run never leaves a torn file where a complete one is expected.
    pub fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.path.join(format!(".{name}.tmp"));
        let target = self.path.join(name);
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(bytes)?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        Ok(())
    }
}

/// What every run leaves behind besides its data files: enough to rerun
/// it exactly and to see at a glance how it went.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub run_id: &'a str,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub config: &'a ExperimentConfig,
    /// Verification outcomes; empty for commands that do not verify.
    pub checks: &'a [CheckResult],
}

pub fn write_manifest(dir: &RunDir, manifest: &RunManifest<'_>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    dir.write_atomic("manifest.json", text.as_bytes())
}
