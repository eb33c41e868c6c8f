//! Output directories: locking, artifact bookkeeping and manifests.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use figdetect::corpus::FileDigest;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("values serialise");
    v.push(b'\n');
    v
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Exclusive claim on a directory, released on drop. A second process
/// trying the same directory fails instead of interleaving writes.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    CliError::Other(format!(
                        "{} is locked by process {}; remove {} if that process is gone",
                        dir.display(),
                        holder.trim(),
                        path.display()
                    ))
                } else {
                    CliError::io(&path, e)
                }
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(DirLock { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes files under a root and remembers their digests.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    files: Vec<FileDigest>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Artifacts {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel.as_ref());
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.record(rel.as_ref(), bytes);
        Ok(path)
    }

    /// Registers a file some other code wrote.
    pub fn adopt(&mut self, rel: impl AsRef<Path>) -> Result<()> {
        let path = self.root.join(rel.as_ref());
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.record(rel.as_ref(), &bytes);
        Ok(())
    }

    fn record(&mut self, rel: &Path, bytes: &[u8]) {
        let rel = rel.to_string_lossy().replace('\\', "/");
        self.files.retain(|f| f.path != rel);
        self.files.push(FileDigest {
            path: rel,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    pub fn into_files(mut self) -> Vec<FileDigest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files
    }
}

/// Provenance of one command's outputs. Everything except the timestamps
/// is a function of the inputs when the backend is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub framework_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, inputs: Vec<FileDigest>, started_unix: u64) -> Self {
        RunManifest {
            command: command.into(),
            config_hash: config_hash.into(),
            framework_version: env!("CARGO_PKG_VERSION").into(),
            started_unix,
            finished_unix: 0,
            inputs,
            artifacts: Vec::new(),
        }
    }

    pub fn finish(mut self, artifacts: Artifacts) -> Result<Self> {
        let root = artifacts.root().to_path_buf();
        self.artifacts = artifacts.into_files();
        self.finished_unix = unix_now();
        let path = root.join(MANIFEST);
        fs::write(&path, pretty_json(&self)).map_err(|e| CliError::io(&path, e))?;
        Ok(self)
    }

    /// True when `dir` holds a finished run of the same config over the
    /// same inputs whose artifacts are all intact.
    pub fn is_current(dir: &Path, config_hash: &str, inputs: &[FileDigest]) -> bool {
        let Ok(m) = read_json::<RunManifest>(&dir.join(MANIFEST)) else {
            return false;
        };
        m.config_hash == config_hash
            && m.inputs == inputs
            && m.finished_unix > 0
            && m.artifacts
                .iter()
                .all(|a| sha256_file(&dir.join(&a.path)).is_ok_and(|h| h == a.sha256))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        let err = DirLock::acquire(dir.path()).unwrap_err();
        assert!(err.to_string().contains("locked"), "{err}");
        drop(lock);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path());
        a.write("x/y.txt", b"hello").unwrap();
        RunManifest::new("test", "h", vec![], unix_now()).finish(a).unwrap();
        assert!(RunManifest::is_current(dir.path(), "h", &[]));
        assert!(!RunManifest::is_current(dir.path(), "other", &[]));
        fs::write(dir.path().join("x/y.txt"), b"changed").unwrap();
        assert!(!RunManifest::is_current(dir.path(), "h", &[]));
    }
}
