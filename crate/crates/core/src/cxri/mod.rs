//! The connector runtime interface: a six-operation contract — connect,
//! query, read, write, subscribe, health — that decouples orchestration from
//! any particular store.
//!
//! Concrete backends (directory tree, git-style directory with a commit
//! metadata sidecar, in-memory tabular store) are private to this module;
//! outside code only ever sees [`Connection`], so nothing upstream can
//! special-case a storage kind. Declared `connector` sources (SaaS systems)
//! parse fine but fail at connect — this build stubs live upstreams.
//!
//! Subscriptions are polling-based: [`Connection::poll`] diffs the store
//! against the subscription's last snapshot and emits created / modified /
//! deleted events. Push delivery is out of scope.

mod dir;
mod mem;

pub use dir::{Sidecar, SidecarEntry, SIDECAR_FILENAME};
pub use mem::{register_dataset, remove_dataset, TabularRow};

use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glob::PathPattern;
use crate::manifest::{DomainManifest, RoleRule, SourceSpec, SourceType};
use crate::registry::{ContextUnit, Sensitivity, SourceStatus, UnitMetadata, UnitType};
use crate::timefmt;

#[derive(Debug, Error)]
pub enum CxriError {
    #[error("connect failed: {0}")]
    ConnectFailed(String),
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("write failed: {0}")]
    WriteFailed(String),
    #[error("bad path glob: {0}")]
    BadGlob(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectorKind {
    FileSystem,
    GitRepo,
    InMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Created,
    Modified,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub path: String,
    pub kind: ChangeKind,
    #[serde(with = "timefmt")]
    pub observed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HealthStatus {
    pub status: SourceStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteResult {
    pub new_version: u64,
}

/// How raw store entries become context units: which domain they belong to
/// and which roles may see them. Derived from the domain manifest.
#[derive(Debug, Clone)]
pub struct IngestPolicy {
    pub domain: String,
    pub roles: Vec<RoleRule>,
    /// Authority for entries whose metadata does not declare one.
    pub default_authority: f64,
}

impl IngestPolicy {
    pub fn from_manifest(manifest: &DomainManifest) -> Self {
        IngestPolicy {
            domain: manifest.name().to_owned(),
            roles: manifest.access().roles.clone(),
            default_authority: 0.5,
        }
    }

    /// Role names whose read scope could cover `path` under some assignment.
    pub fn roles_for(&self, path: &str) -> BTreeSet<String> {
        self.roles
            .iter()
            .filter(|rule| rule.read.iter().any(|p| p.matches_any_assigned(path)))
            .map(|rule| rule.role.clone())
            .collect()
    }
}

/// What a backend reports for one entry. `authority: None` means the store
/// declares nothing and the ingest policy default applies.
pub(crate) struct RawEntry {
    pub content: String,
    pub author: String,
    pub timestamp: DateTime<Utc>,
    pub sensitivity: Sensitivity,
    pub authority: Option<f64>,
    pub entities: Vec<String>,
    pub unit_type: UnitType,
}

pub(crate) struct ListEntry {
    pub path: String,
    pub content_hash: u64,
    pub modified: DateTime<Utc>,
}

pub(crate) enum BackendFault {
    /// Store unreachable — maps to ConnectionLost and kills the connection.
    Gone(String),
    /// Entry missing — maps to NotFound.
    Missing(String),
    /// Write rejected — maps to WriteFailed.
    Denied(String),
}

pub(crate) trait Backend: Send {
    fn probe(&self) -> Result<String, String>;
    fn list(&self) -> Result<Vec<ListEntry>, BackendFault>;
    fn read(&self, path: &str) -> Result<RawEntry, BackendFault>;
    fn write(&mut self, path: &str, content: &str) -> Result<(), BackendFault>;
}

/// Stable unit identifier for one source entry. Versions of the same entry
/// share an id; the registry tracks version numbers separately.
pub fn unit_id(domain: &str, source: &str, path: &str) -> String {
    format!("{domain}:{source}:{path}")
}

pub(crate) fn hash64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A single-owner handle to one source. Version numbers are tracked per
/// path: a read after a content change increments, an unchanged read is
/// idempotent, and writes always increment.
pub struct Connection {
    kind: ConnectorKind,
    source_name: String,
    spec: IndexMap<String, String>,
    alive: bool,
    policy: IngestPolicy,
    backend: Box<dyn Backend>,
    versions: HashMap<String, (u64, u64)>, // path → (content hash, version)
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("kind", &self.kind)
            .field("source_name", &self.source_name)
            .field("alive", &self.alive)
            .finish_non_exhaustive()
    }
}

/// Snapshot held by one subscriber; feed it back to [`Connection::poll`].
#[derive(Debug)]
pub struct Subscription {
    pattern: PathPattern,
    known: HashMap<String, (u64, DateTime<Utc>)>,
}

/// Open a connection for a declared source. This is the only place in the
/// codebase that dispatches on a connector kind.
pub fn connect(spec: &SourceSpec, policy: IngestPolicy) -> Result<Connection, CxriError> {
    let (kind, backend): (ConnectorKind, Box<dyn Backend>) = match spec.source_type {
        SourceType::FileSystem => {
            let root = require_config(spec, "path")?;
            (
                ConnectorKind::FileSystem,
                Box::new(dir::DirBackend::open(root, false)?),
            )
        }
        SourceType::GitRepo => {
            let root = require_config(spec, "repo")?;
            (
                ConnectorKind::GitRepo,
                Box::new(dir::DirBackend::open(root, true)?),
            )
        }
        SourceType::Database => {
            let dataset = require_config(spec, "dataset")?;
            (
                ConnectorKind::InMemory,
                Box::new(mem::MemBackend::open(dataset)?),
            )
        }
        SourceType::Connector => {
            let system = spec
                .config
                .get("system")
                .cloned()
                .unwrap_or_else(|| "unnamed".to_owned());
            return Err(CxriError::ConnectFailed(format!(
                "source {:?} needs a live {system} connector; upstream connectors are stubbed in this build",
                spec.name
            )));
        }
    };
    backend.probe().map_err(CxriError::ConnectFailed)?;
    Ok(Connection {
        kind,
        source_name: spec.name.clone(),
        spec: spec.config.clone(),
        alive: true,
        policy,
        backend,
        versions: HashMap::new(),
    })
}

fn require_config(spec: &SourceSpec, key: &str) -> Result<String, CxriError> {
    spec.config.get(key).cloned().ok_or_else(|| {
        CxriError::ConnectFailed(format!(
            "source {:?} ({}) is missing config key {key:?}",
            spec.name,
            serde_json::to_string(&spec.source_type).unwrap_or_default()
        ))
    })
}

impl Connection {
    pub fn kind(&self) -> ConnectorKind {
        self.kind
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn spec(&self) -> &IndexMap<String, String> {
        &self.spec
    }

    pub fn alive(&self) -> bool {
        self.alive
    }

    pub fn close(&mut self) {
        self.alive = false;
    }

    fn ensure_alive(&self) -> Result<(), CxriError> {
        if self.alive {
            Ok(())
        } else {
            Err(CxriError::ConnectionLost("connection closed".into()))
        }
    }

    fn fault(&mut self, fault: BackendFault) -> CxriError {
        match fault {
            BackendFault::Gone(detail) => {
                self.alive = false;
                CxriError::ConnectionLost(detail)
            }
            BackendFault::Missing(path) => CxriError::NotFound(path),
            BackendFault::Denied(detail) => CxriError::WriteFailed(detail),
        }
    }

    fn version_for(&mut self, path: &str, content: &str) -> u64 {
        let hash = hash64(content.as_bytes());
        match self.versions.get(path) {
            Some(&(known, version)) if known == hash => version,
            Some(&(_, version)) => {
                self.versions.insert(path.to_owned(), (hash, version + 1));
                version + 1
            }
            None => {
                self.versions.insert(path.to_owned(), (hash, 1));
                1
            }
        }
    }

    fn unit_from(&mut self, path: &str, raw: RawEntry) -> ContextUnit {
        let version = self.version_for(path, &raw.content);
        ContextUnit {
            id: unit_id(&self.policy.domain, &self.source_name, path),
            content: raw.content,
            unit_type: raw.unit_type,
            metadata: UnitMetadata {
                author: raw.author,
                timestamp: raw.timestamp,
                domain: self.policy.domain.clone(),
                sensitivity: raw.sensitivity,
                entities: raw.entities,
                source: self.source_name.clone(),
                path: path.to_owned(),
                authority: raw.authority.unwrap_or(self.policy.default_authority),
            },
            version,
            // Embedding happens at ingest, once the corpus-wide vectorizer
            // is fitted; connectors return units without vectors.
            vector: Vec::new(),
            authorized_roles: self.policy.roles_for(path),
        }
    }

    /// Connector-native search: case-insensitive substring over content,
    /// path, author, and entities. Empty query matches everything.
    pub fn query(&mut self, q: &str) -> Result<Vec<ContextUnit>, CxriError> {
        self.ensure_alive()?;
        let entries = self.backend.list().map_err(|f| self.fault(f))?;
        let needle = q.to_lowercase();
        let mut units = Vec::new();
        for entry in entries {
            let raw = match self.backend.read(&entry.path) {
                Ok(raw) => raw,
                Err(BackendFault::Missing(_)) => continue, // raced deletion
                Err(f) => return Err(self.fault(f)),
            };
            let hit = needle.is_empty()
                || raw.content.to_lowercase().contains(&needle)
                || entry.path.to_lowercase().contains(&needle)
                || raw.author.to_lowercase().contains(&needle)
                || raw
                    .entities
                    .iter()
                    .any(|e| e.to_lowercase().contains(&needle));
            if hit {
                units.push(self.unit_from(&entry.path, raw));
            }
        }
        Ok(units)
    }

    pub fn read(&mut self, path: &str) -> Result<ContextUnit, CxriError> {
        self.ensure_alive()?;
        let raw = self.backend.read(path).map_err(|f| self.fault(f))?;
        Ok(self.unit_from(path, raw))
    }

    /// Write content. Authorization is the caller's job — this layer only
    /// moves bytes.
    pub fn write(&mut self, path: &str, content: &str) -> Result<WriteResult, CxriError> {
        self.ensure_alive()?;
        self.backend
            .write(path, content)
            .map_err(|f| self.fault(f))?;
        let hash = hash64(content.as_bytes());
        let new_version = self
            .versions
            .get(path)
            .map(|&(_, v)| v + 1)
            .unwrap_or(1);
        self.versions.insert(path.to_owned(), (hash, new_version));
        Ok(WriteResult { new_version })
    }

    /// Start watching paths matching `path_glob`. The baseline snapshot is
    /// taken now, so only subsequent changes produce events.
    pub fn subscribe(&mut self, path_glob: &str) -> Result<Subscription, CxriError> {
        self.ensure_alive()?;
        let pattern =
            PathPattern::parse(path_glob).map_err(|e| CxriError::BadGlob(e.to_string()))?;
        let entries = self.backend.list().map_err(|f| self.fault(f))?;
        let known = entries
            .into_iter()
            .filter(|e| pattern.matches(&e.path))
            .map(|e| (e.path, (e.content_hash, e.modified)))
            .collect();
        Ok(Subscription { pattern, known })
    }

    /// One polling step: diff the store against the subscription snapshot.
    /// Events are ordered by (store modification time, path); deletions sort
    /// at the observation instant.
    pub fn poll(
        &mut self,
        sub: &mut Subscription,
        now: DateTime<Utc>,
    ) -> Result<Vec<ChangeEvent>, CxriError> {
        self.ensure_alive()?;
        let entries = self.backend.list().map_err(|f| self.fault(f))?;
        let mut current: HashMap<String, (u64, DateTime<Utc>)> = HashMap::new();
        for e in entries {
            if sub.pattern.matches(&e.path) {
                current.insert(e.path, (e.content_hash, e.modified));
            }
        }

        let mut events: Vec<(DateTime<Utc>, ChangeEvent)> = Vec::new();
        for (path, &(hash, modified)) in &current {
            match sub.known.get(path) {
                None => events.push((
                    modified,
                    ChangeEvent {
                        path: path.clone(),
                        kind: ChangeKind::Created,
                        observed_at: now,
                    },
                )),
                Some(&(old_hash, _)) if old_hash != hash => events.push((
                    modified,
                    ChangeEvent {
                        path: path.clone(),
                        kind: ChangeKind::Modified,
                        observed_at: now,
                    },
                )),
                Some(_) => {}
            }
        }
        for path in sub.known.keys() {
            if !current.contains_key(path) {
                events.push((
                    now,
                    ChangeEvent {
                        path: path.clone(),
                        kind: ChangeKind::Deleted,
                        observed_at: now,
                    },
                ));
            }
        }
        events.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.path.cmp(&b.1.path)));
        sub.known = current;
        Ok(events.into_iter().map(|(_, e)| e).collect())
    }

    /// Cheap, side-effect-free probe. Works on closed connections too.
    pub fn health(&self) -> HealthStatus {
        match self.backend.probe() {
            Ok(detail) => HealthStatus {
                status: SourceStatus::Connected,
                detail,
            },
            Err(detail) => HealthStatus {
                status: SourceStatus::Disconnected,
                detail,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::parse_manifest;

    fn policy() -> IngestPolicy {
        let manifest = parse_manifest(
            r#"
apiVersion: context/v1
kind: ContextDomain
metadata: {name: sales}
spec:
  sources:
    - {name: records, type: file-system, config: {path: /tmp}, refresh: 1h}
  access:
    roles:
      - {role: sales-rep, read: ["clients/${assigned}/*"]}
      - {role: sales-manager, read: ["*"]}
"#,
        )
        .unwrap();
        IngestPolicy::from_manifest(&manifest)
    }

    #[test]
    fn roles_follow_read_scope() {
        let p = policy();
        let roles = p.roles_for("clients/henderson/profile.md");
        assert!(roles.contains("sales-rep"));
        assert!(roles.contains("sales-manager"));
        let pipeline = p.roles_for("pipeline/q3.md");
        assert!(!pipeline.contains("sales-rep"));
        assert!(pipeline.contains("sales-manager"));
    }

    #[test]
    fn stubbed_connector_type_fails_to_connect() {
        let manifest = parse_manifest(
            r#"
apiVersion: context/v1
kind: ContextDomain
metadata: {name: sales}
spec:
  sources:
    - {name: crm, type: connector, config: {system: salesforce}, refresh: 1h}
  access:
    roles: [{role: rep, read: ["*"]}]
"#,
        )
        .unwrap();
        let err = connect(&manifest.sources()[0], policy()).unwrap_err();
        match err {
            CxriError::ConnectFailed(detail) => assert!(detail.contains("salesforce")),
            other => panic!("expected ConnectFailed, got {other}"),
        }
    }

    #[test]
    fn missing_config_key_fails_to_connect() {
        let manifest = parse_manifest(
            r#"
apiVersion: context/v1
kind: ContextDomain
metadata: {name: sales}
spec:
  sources:
    - {name: docs, type: file-system, refresh: 1h}
  access:
    roles: [{role: rep, read: ["*"]}]
"#,
        )
        .unwrap();
        let err = connect(&manifest.sources()[0], policy()).unwrap_err();
        assert!(matches!(err, CxriError::ConnectFailed(d) if d.contains("path")));
    }
}
