//! Directory-tree backend, shared by the file-system connector and the
//! git-style connector.
//!
//! One file = one context unit (pre-chunking). Commit-style metadata lives in
//! a `.ctxmeta.json` sidecar at the source root: a JSON map from relative
//! path to author / timestamp / sensitivity / authority (and optionally
//! entity names). The filesystem connector treats the sidecar as optional
//! and falls back to filesystem metadata; the git-style connector requires
//! it — exposing per-file commit metadata without shelling out to a git
//! binary is its whole point.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Backend, BackendFault, CxriError, ListEntry, RawEntry};
use crate::registry::{Sensitivity, UnitType};
use crate::timefmt;

pub const SIDECAR_FILENAME: &str = ".ctxmeta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub author: String,
    #[serde(with = "timefmt")]
    pub timestamp: DateTime<Utc>,
    pub sensitivity: Sensitivity,
    pub authority: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<String>,
}

/// Sidecar file shape: relative path → entry.
pub type Sidecar = BTreeMap<String, SidecarEntry>;

pub(crate) struct DirBackend {
    root: PathBuf,
}

impl DirBackend {
    pub fn open(root: String, sidecar_required: bool) -> Result<Self, CxriError> {
        let root = PathBuf::from(root);
        if !root.is_dir() {
            return Err(CxriError::ConnectFailed(format!(
                "{} is not a reachable directory",
                root.display()
            )));
        }
        let backend = DirBackend { root };
        if sidecar_required {
            // Fail at connect, not first read, if the metadata is unusable.
            match backend.load_sidecar() {
                Ok(Some(_)) => {}
                Ok(None) => {
                    return Err(CxriError::ConnectFailed(format!(
                        "{} has no {SIDECAR_FILENAME} metadata sidecar",
                        backend.root.display()
                    )))
                }
                Err(detail) => return Err(CxriError::ConnectFailed(detail)),
            }
        }
        Ok(backend)
    }

    fn load_sidecar(&self) -> Result<Option<Sidecar>, String> {
        let path = self.root.join(SIDECAR_FILENAME);
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)
            .map_err(|e| format!("sidecar {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| format!("sidecar {}: {e}", path.display()))
    }

    /// Reject absolute paths and traversal; return the on-disk location.
    fn resolve(&self, rel: &str) -> Result<PathBuf, BackendFault> {
        if rel.is_empty() || rel.starts_with('/') {
            return Err(BackendFault::Missing(rel.to_owned()));
        }
        let mut full = self.root.clone();
        for seg in rel.split('/') {
            if seg.is_empty() || seg == "." || seg == ".." {
                return Err(BackendFault::Missing(rel.to_owned()));
            }
            full.push(seg);
        }
        Ok(full)
    }

    fn walk(&self, dir: &Path, prefix: &str, out: &mut Vec<String>) -> Result<(), BackendFault> {
        let entries = fs::read_dir(dir)
            .map_err(|e| BackendFault::Gone(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let entry = entry.map_err(|e| BackendFault::Gone(e.to_string()))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            let rel = if prefix.is_empty() {
                name.clone()
            } else {
                format!("{prefix}/{name}")
            };
            let path = entry.path();
            if path.is_dir() {
                self.walk(&path, &rel, out)?;
            } else if path.is_file() {
                out.push(rel);
            }
        }
        Ok(())
    }

    #[cfg(unix)]
    fn is_writable(path: &Path) -> bool {
        use std::os::unix::fs::PermissionsExt;
        // Explicit permission-bit check: the test environment may run with
        // privileges that bypass kernel enforcement, and a read-only fixture
        // must still refuse writes deterministically.
        fs::metadata(path)
            .map(|m| m.permissions().mode() & 0o200 != 0)
            .unwrap_or(false)
    }

    #[cfg(not(unix))]
    fn is_writable(path: &Path) -> bool {
        fs::metadata(path)
            .map(|m| !m.permissions().readonly())
            .unwrap_or(false)
    }
}

impl Backend for DirBackend {
    fn probe(&self) -> Result<String, String> {
        if self.root.is_dir() {
            Ok(format!("root {}", self.root.display()))
        } else {
            Err(format!("root {} unreachable", self.root.display()))
        }
    }

    fn list(&self) -> Result<Vec<ListEntry>, BackendFault> {
        let mut paths = Vec::new();
        self.walk(&self.root.clone(), "", &mut paths)?;
        paths.sort();
        let mut out = Vec::new();
        for rel in paths {
            let full = self.resolve(&rel)?;
            let content = match fs::read(&full) {
                Ok(bytes) => bytes,
                Err(_) => continue, // raced deletion between walk and read
            };
            let modified = fs::metadata(&full)
                .and_then(|m| m.modified())
                .map(DateTime::<Utc>::from)
                .unwrap_or_else(|_| Utc::now());
            out.push(ListEntry {
                path: rel,
                content_hash: super::hash64(&content),
                modified,
            });
        }
        Ok(out)
    }

    fn read(&self, path: &str) -> Result<RawEntry, BackendFault> {
        if !self.root.is_dir() {
            return Err(BackendFault::Gone(format!(
                "root {} unreachable",
                self.root.display()
            )));
        }
        let full = self.resolve(path)?;
        if !full.is_file() {
            return Err(BackendFault::Missing(path.to_owned()));
        }
        let content = fs::read_to_string(&full)
            .map_err(|e| BackendFault::Gone(format!("{path}: {e}")))?;
        let sidecar = self.load_sidecar().map_err(BackendFault::Gone)?;
        let meta = sidecar.as_ref().and_then(|s| s.get(path));
        let fallback_timestamp = fs::metadata(&full)
            .and_then(|m| m.modified())
            .map(DateTime::<Utc>::from)
            .unwrap_or_else(|_| Utc::now());
        Ok(RawEntry {
            content,
            author: meta.map(|m| m.author.clone()).unwrap_or_else(|| "unknown".into()),
            timestamp: meta.map(|m| m.timestamp).unwrap_or(fallback_timestamp),
            sensitivity: meta.map(|m| m.sensitivity).unwrap_or(Sensitivity::Internal),
            authority: meta.map(|m| m.authority),
            entities: meta.map(|m| m.entities.clone()).unwrap_or_default(),
            unit_type: UnitType::Unstructured,
        })
    }

    fn write(&mut self, path: &str, content: &str) -> Result<(), BackendFault> {
        if !self.root.is_dir() {
            return Err(BackendFault::Gone(format!(
                "root {} unreachable",
                self.root.display()
            )));
        }
        if !Self::is_writable(&self.root) {
            return Err(BackendFault::Denied(format!(
                "root {} is read-only",
                self.root.display()
            )));
        }
        let full = self.resolve(path)?;
        if full.exists() && !Self::is_writable(&full) {
            return Err(BackendFault::Denied(format!("{path} is read-only")));
        }
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| BackendFault::Denied(format!("{path}: {e}")))?;
        }
        fs::write(&full, content).map_err(|e| BackendFault::Denied(format!("{path}: {e}")))
    }
}
