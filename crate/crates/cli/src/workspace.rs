//! Workspace directory: artifacts stored under content-hash file names and
//! a manifest mapping artifact keys to the current file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    /// Parameters that produced the artifact.
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, Artifact>,
}

pub struct Workspace {
    root: PathBuf,
    manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Manifest key of an artifact, optionally scoped to a split.
pub fn key(kind: &str, split: Option<&str>) -> String {
    match split {
        Some(s) => format!("{kind}@{s}"),
        None => kind.to_string(),
    }
}

impl Workspace {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, Failure> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Failure::data(format!("{}: {e}", root.display())))?;
        let path = root.join(MANIFEST);
        let manifest = if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        } else {
            Manifest::default()
        };
        Ok(Workspace { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Writes `bytes` as the artifact `key` and records it in the manifest.
    pub fn store(&mut self, key: &str, ext: &str, bytes: &[u8], params: serde_json::Value) -> Result<PathBuf, Failure> {
        let sha256 = sha256_hex(bytes);
        let stem: String = key.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        let file = format!("{stem}-{}.{ext}", &sha256[..16]);
        let path = self.root.join(&file);
        if !path.exists() {
            fs::write(&path, bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        }
        self.manifest.artifacts.insert(key.to_string(), Artifact { file, sha256, params });
        self.save()?;
        log::info!("stored {key} at {}", path.display());
        Ok(path)
    }

    fn save(&self) -> Result<(), Failure> {
        let path = self.root.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Failure::data(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }

    pub fn artifact(&self, key: &str) -> Option<&Artifact> {
        self.manifest.artifacts.get(key)
    }

    /// The split-scoped artifact if present, else the unscoped one.
    pub fn find(&self, kind: &str, split: Option<&str>) -> Option<(&str, &Artifact)> {
        let scoped = split.and_then(|s| self.manifest.artifacts.get_key_value(&key(kind, Some(s))));
        scoped.or_else(|| self.manifest.artifacts.get_key_value(kind)).map(|(k, a)| (k.as_str(), a))
    }

    pub fn require(&self, kind: &str, split: Option<&str>, hint: &str) -> Result<(PathBuf, &Artifact), Failure> {
        match self.find(kind, split) {
            Some((_, a)) => Ok((self.root.join(&a.file), a)),
            None => Err(Failure::data(format!("workspace {} has no {kind} artifact; run `recallfeed {hint}` first", self.root.display()))),
        }
    }

    /// Reads an artifact and checks it against its recorded hash.
    pub fn read(&self, kind: &str, split: Option<&str>, hint: &str) -> Result<Vec<u8>, Failure> {
        let (path, artifact) = self.require(kind, split, hint)?;
        let bytes = fs::read(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        if sha256_hex(&bytes) != artifact.sha256 {
            return Err(Failure::data(format!("{} does not match its manifest hash", path.display())));
        }
        Ok(bytes)
    }
}
