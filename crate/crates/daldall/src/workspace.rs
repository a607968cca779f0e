//! Workspace directory: exclusive lock plus an atomically rewritten manifest
//! of completed stages, their fingerprints and artifacts.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::formats;

pub const LOCK_FILE: &str = ".daldall.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the stage's effective settings and upstream fingerprints.
    pub fingerprint: String,
    /// Paths relative to the workspace root.
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub info: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Query ids kept by sampling, when sampling was requested.
    #[serde(default)]
    pub sample_ids: Option<Vec<String>>,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
}

struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct Workspace {
    root: PathBuf,
    manifest: Manifest,
    _lock: Lock,
}

impl Workspace {
    /// Creates the directory if needed and takes the lock.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let lock_path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(_) => {}
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(Error::Locked(root.to_path_buf())),
            Err(e) => return Err(Error::io(&lock_path, e)),
        }
        let lock = Lock(lock_path);
        let mpath = root.join(MANIFEST_FILE);
        let manifest = if mpath.exists() {
            let text = formats::read_to_string(&mpath)?;
            serde_json::from_str(&text).map_err(|e| Error::malformed(&mpath, e.line(), e.to_string()))?
        } else {
            Manifest {
                version: 1,
                ..Manifest::default()
            }
        };
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.manifest.stages.get(name)
    }

    pub fn is_complete(&self, name: &str) -> bool {
        self.manifest.stages.contains_key(name)
    }

    pub fn fingerprint(&self, name: &str) -> Option<&str> {
        self.stage(name).map(|s| s.fingerprint.as_str())
    }

    pub fn record(&mut self, name: &str, record: StageRecord) -> Result<()> {
        self.manifest.stages.insert(name.to_string(), record);
        self.save()
    }

    pub fn forget(&mut self, name: &str) -> Result<()> {
        if self.manifest.stages.remove(name).is_some() {
            self.save()?;
        }
        Ok(())
    }

    pub fn save(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        formats::write_atomic(&self.root.join(MANIFEST_FILE), text.as_bytes())
    }
}
