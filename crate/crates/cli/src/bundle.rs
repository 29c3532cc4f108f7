//! Output directories written through a staging directory.
//!
//! Files go to `.<name>.partial` next to the target; [`Bundle::commit`]
//! swaps it into place. A bundle dropped without committing removes its
//! staging directory, so failed runs leave no partial outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, CliResult};

/// Marker identifying a directory created by this tool.
pub const MARKER: &str = ".pcatdyn-bundle";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug)]
pub struct Bundle {
    staging: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl Bundle {
    /// Refuses to replace an existing non-empty directory that was not
    /// produced by a previous bundle.
    pub fn create(target: &Path) -> CliResult<Bundle> {
        if target.exists() {
            let ours = target.join(MARKER).exists();
            let empty = fs::read_dir(target).map(|mut d| d.next().is_none()).unwrap_or(false);
            if !target.is_dir() || !(ours || empty) {
                return Err(CliError::config(format!(
                    "output directory {} exists and was not created by pcatdyn",
                    target.display()
                )));
            }
        }
        let name = target
            .file_name()
            .ok_or_else(|| CliError::config(format!("output path {} has no final component", target.display())))?;
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| CliError::output(parent, e))?;
        let staging = parent.join(format!(".{}.partial", name.to_string_lossy()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| CliError::output(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| CliError::output(&staging, e))?;
        fs::write(staging.join(MARKER), b"").map_err(|e| CliError::output(&staging, e))?;
        Ok(Bundle { staging, target: target.to_path_buf(), committed: false })
    }

    /// Staged location of `rel`; parent directories are created.
    pub fn path(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.staging.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        }
        Ok(p)
    }

    pub fn write(&self, rel: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        let p = self.path(rel)?;
        fs::write(&p, bytes).map_err(|e| CliError::output(&p, e))
    }

    /// Every staged file except the marker and `exclude`, sorted by path.
    pub fn checksums(&self, exclude: &[&str]) -> CliResult<Vec<FileEntry>> {
        let mut out = Vec::new();
        for entry in walkdir::WalkDir::new(&self.staging).sort_by_file_name() {
            let entry = entry.map_err(|e| CliError::output(&self.staging, e.into()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(&self.staging).expect("inside staging");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if rel == MARKER || exclude.contains(&rel.as_str()) {
                continue;
            }
            let bytes = fs::read(entry.path()).map_err(|e| CliError::output(entry.path(), e))?;
            out.push(FileEntry { bytes: bytes.len() as u64, sha256: sha256_hex(&bytes), path: rel });
        }
        Ok(out)
    }

    pub fn commit(mut self) -> CliResult<PathBuf> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| CliError::output(&self.target, e))?;
        }
        fs::rename(&self.staging, &self.target).map_err(|e| CliError::output(&self.target, e))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Bundle {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
