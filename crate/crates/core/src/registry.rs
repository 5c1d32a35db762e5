//! Authoritative in-process store for domains, context units, source states,
//! and freshness annotations.
//!
//! The registry is the single source of truth the router, permission engine,
//! and reconciler all read from. It is in-memory, guarded by one RwLock so
//! every operation is linearizable, with an optional JSONL snapshot export.
//!
//! Units are stored in *slots* keyed by (domain, source, path). A slot keeps
//! at most two versions (current + previous) — enough to detect and resolve
//! conflicts, where more than one version is simultaneously *live*
//! (routable). Normal upserts supersede: the new version is live, the old one
//! is retained as history only. An ingest path that simulates a sync anomaly
//! can retain the old version live, which is exactly the conflicted state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glob::PathPattern;
use crate::manifest::{self, DomainManifest, ManifestChange};
use crate::timefmt;
use crate::vector::DIM;

/// Deterministic, model-free token estimate: ceil(character count / 4).
pub fn token_count(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub const DEFAULT_FAILURE_THRESHOLD: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("domain {0:?} is already registered")]
    DuplicateDomain(String),
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("unknown source {name:?} in domain {domain:?}")]
    UnknownSource { domain: String, name: String },
    #[error("unit {0:?} has no authorized roles; refusing admission")]
    EmptyAuthorizedRoles(String),
    #[error("unit {id:?} rejected: {reason}")]
    InvalidUnit { id: String, reason: String },
    #[error("bad query filter: {0}")]
    BadFilter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitType {
    Unstructured,
    Structured,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensitivity {
    Public,
    Internal,
    Confidential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMetadata {
    pub author: String,
    #[serde(with = "timefmt")]
    pub timestamp: DateTime<Utc>,
    pub domain: String,
    pub sensitivity: Sensitivity,
    pub entities: Vec<String>,
    pub source: String,
    pub path: String,
    /// Authority of the backing source in [0, 1], set at ingestion.
    pub authority: f64,
}

/// Smallest addressable element of organizational knowledge.
///
/// `id` is opaque to the registry and stable across versions of the same
/// logical unit; slots are keyed by metadata (domain, source, path), and
/// `version` is assigned by the registry at upsert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextUnit {
    pub id: String,
    pub content: String,
    pub unit_type: UnitType,
    pub metadata: UnitMetadata,
    pub version: u64,
    pub vector: Vec<f64>,
    pub authorized_roles: BTreeSet<String>,
}

impl ContextUnit {
    pub fn token_count(&self) -> u64 {
        token_count(&self.content)
    }
}

/// Freshness classification of a unit. `Conflicted` is slot-level (two live
/// versions) and overrides the age-based states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreshnessState {
    Fresh,
    Stale,
    Expired,
    Conflicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceStatus {
    Connected,
    Degraded,
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    pub source: String,
    pub status: SourceStatus,
    pub consecutive_failures: u32,
    #[serde(with = "timefmt::option")]
    pub last_success: Option<DateTime<Utc>>,
}

/// A live unit together with its stored freshness annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedUnit {
    pub unit: ContextUnit,
    pub freshness: FreshnessState,
    /// When the content was last confirmed against its source; initialized
    /// to the content timestamp at ingest, advanced by re-sync.
    pub last_verified: DateTime<Utc>,
    pub stale_since: Option<DateTime<Utc>>,
}

#[derive(Debug, Default, Clone)]
pub struct UnitFilter {
    pub path_glob: Option<String>,
    pub min_version: Option<u64>,
    pub freshness_states: Option<Vec<FreshnessState>>,
}

#[derive(Debug, Clone)]
struct StoredUnit {
    unit: ContextUnit,
    live: bool,
    freshness: FreshnessState,
    last_verified: DateTime<Utc>,
    stale_since: Option<DateTime<Utc>>,
}

impl StoredUnit {
    fn annotated(&self) -> AnnotatedUnit {
        AnnotatedUnit {
            unit: self.unit.clone(),
            freshness: self.freshness,
            last_verified: self.last_verified,
            stale_since: self.stale_since,
        }
    }
}

/// Versions ordered oldest → newest; truncated to the last two.
#[derive(Debug, Default)]
struct Slot {
    versions: Vec<StoredUnit>,
}

impl Slot {
    fn live(&self) -> impl Iterator<Item = &StoredUnit> {
        self.versions.iter().filter(|s| s.live)
    }

    fn live_count(&self) -> usize {
        self.live().count()
    }

    fn newest(&self) -> Option<&StoredUnit> {
        self.versions.last()
    }
}

type SlotKey = (String, String, String); // (domain, source, path)

struct DomainEntry {
    manifest: DomainManifest,
    sources: IndexMap<String, SourceState>,
}

#[derive(Default)]
struct State {
    domains: IndexMap<String, DomainEntry>,
    slots: BTreeMap<SlotKey, Slot>,
    id_index: HashMap<String, SlotKey>,
}

pub struct Registry {
    state: RwLock<State>,
    failure_threshold: u32,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::with_failure_threshold(DEFAULT_FAILURE_THRESHOLD)
    }

    pub fn with_failure_threshold(failure_threshold: u32) -> Self {
        Registry {
            state: RwLock::new(State::default()),
            failure_threshold: failure_threshold.max(1),
        }
    }

    pub fn failure_threshold(&self) -> u32 {
        self.failure_threshold
    }

    // ---- domains ----------------------------------------------------------

    pub fn register_domain(&self, manifest: DomainManifest) -> Result<(), RegistryError> {
        let mut state = self.state.write();
        let name = manifest.name().to_owned();
        if state.domains.contains_key(&name) {
            return Err(RegistryError::DuplicateDomain(name));
        }
        let sources = manifest
            .sources()
            .iter()
            .map(|s| {
                (
                    s.name.clone(),
                    SourceState {
                        source: s.name.clone(),
                        status: SourceStatus::Connected,
                        consecutive_failures: 0,
                        last_success: None,
                    },
                )
            })
            .collect();
        state.domains.insert(name, DomainEntry { manifest, sources });
        Ok(())
    }

    /// Swap in an updated manifest for an existing domain, returning the
    /// section-level diff so the reconciler can propagate changes. Source
    /// states are carried over for sources that survive the edit.
    pub fn replace_manifest(
        &self,
        manifest: DomainManifest,
    ) -> Result<Vec<ManifestChange>, RegistryError> {
        let mut state = self.state.write();
        let name = manifest.name().to_owned();
        let entry = state
            .domains
            .get_mut(&name)
            .ok_or_else(|| RegistryError::UnknownDomain(name.clone()))?;
        let changes = manifest::diff(&entry.manifest, &manifest);
        let mut sources = IndexMap::new();
        for spec in manifest.sources() {
            let carried = entry.sources.shift_remove(&spec.name).unwrap_or(SourceState {
                source: spec.name.clone(),
                status: SourceStatus::Connected,
                consecutive_failures: 0,
                last_success: None,
            });
            sources.insert(spec.name.clone(), carried);
        }
        entry.manifest = manifest;
        entry.sources = sources;
        Ok(changes)
    }

    pub fn list_domains(&self) -> Vec<String> {
        self.state.read().domains.keys().cloned().collect()
    }

    pub fn manifest(&self, domain: &str) -> Option<DomainManifest> {
        self.state
            .read()
            .domains
            .get(domain)
            .map(|e| e.manifest.clone())
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.state.read().domains.contains_key(domain)
    }

    // ---- units ------------------------------------------------------------

    /// Admit a unit. If content and metadata are unchanged from the live
    /// version, no new version is minted — derived fields (vector, role
    /// set) are refreshed in place and the current version number comes
    /// back, so periodic re-ingestion does not churn history. Otherwise the
    /// prior version is retained as history only.
    pub fn upsert_unit(&self, unit: ContextUnit) -> Result<u64, RegistryError> {
        self.upsert_inner(unit, false)
    }

    /// Admit a new version while leaving the prior version live — the
    /// sync-anomaly ingest path that produces a conflicted slot.
    pub fn upsert_unit_retaining_live(&self, unit: ContextUnit) -> Result<u64, RegistryError> {
        self.upsert_inner(unit, true)
    }

    fn upsert_inner(&self, mut unit: ContextUnit, retain_live: bool) -> Result<u64, RegistryError> {
        let mut state = self.state.write();
        if unit.authorized_roles.is_empty() {
            return Err(RegistryError::EmptyAuthorizedRoles(unit.id.clone()));
        }
        if !state.domains.contains_key(&unit.metadata.domain) {
            return Err(RegistryError::UnknownDomain(unit.metadata.domain.clone()));
        }
        if unit.content.is_empty() {
            return Err(RegistryError::InvalidUnit {
                id: unit.id.clone(),
                reason: "content is empty".into(),
            });
        }
        if unit.vector.len() != DIM {
            return Err(RegistryError::InvalidUnit {
                id: unit.id.clone(),
                reason: format!("vector has {} dims, expected {DIM}", unit.vector.len()),
            });
        }
        let norm: f64 = unit.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm != 0.0 && (norm - 1.0).abs() > 1e-6 {
            return Err(RegistryError::InvalidUnit {
                id: unit.id.clone(),
                reason: format!("vector norm {norm} is neither 0 nor 1"),
            });
        }
        if !(0.0..=1.0).contains(&unit.metadata.authority) {
            return Err(RegistryError::InvalidUnit {
                id: unit.id.clone(),
                reason: format!("authority {} outside [0, 1]", unit.metadata.authority),
            });
        }

        let key: SlotKey = (
            unit.metadata.domain.clone(),
            unit.metadata.source.clone(),
            unit.metadata.path.clone(),
        );
        if let Some(existing) = state.id_index.get(&unit.id) {
            if existing != &key {
                return Err(RegistryError::InvalidUnit {
                    id: unit.id.clone(),
                    reason: format!(
                        "id already bound to slot {existing:?}, refusing reuse for {key:?}"
                    ),
                });
            }
        }

        state.id_index.insert(unit.id.clone(), key.clone());
        let slot = state.slots.entry(key).or_default();
        if !retain_live {
            if let Some(newest) = slot.versions.last_mut() {
                if newest.live
                    && newest.unit.content == unit.content
                    && newest.unit.metadata == unit.metadata
                {
                    newest.unit.vector = unit.vector;
                    newest.unit.authorized_roles = unit.authorized_roles;
                    return Ok(newest.unit.version);
                }
            }
        }
        let version = slot.newest().map(|s| s.unit.version + 1).unwrap_or(1);
        unit.version = version;
        if !retain_live {
            for stored in &mut slot.versions {
                stored.live = false;
            }
        }
        let last_verified = unit.metadata.timestamp;
        slot.versions.push(StoredUnit {
            unit,
            live: true,
            freshness: FreshnessState::Fresh,
            last_verified,
            stale_since: None,
        });
        if slot.versions.len() > 2 {
            let excess = slot.versions.len() - 2;
            slot.versions.drain(..excess);
        }
        Ok(version)
    }

    /// Live units of a domain, stable order by (path asc, version desc).
    pub fn query_units(
        &self,
        domain: &str,
        filter: &UnitFilter,
    ) -> Result<Vec<ContextUnit>, RegistryError> {
        let pattern = filter
            .path_glob
            .as_deref()
            .map(PathPattern::parse)
            .transpose()
            .map_err(|e| RegistryError::BadFilter(e.to_string()))?;
        let state = self.state.read();
        if !state.domains.contains_key(domain) {
            return Err(RegistryError::UnknownDomain(domain.to_owned()));
        }
        let mut out: Vec<ContextUnit> = Vec::new();
        for ((d, _, _), slot) in &state.slots {
            if d != domain {
                continue;
            }
            for stored in slot.live() {
                if let Some(p) = &pattern {
                    if !p.matches(&stored.unit.metadata.path) {
                        continue;
                    }
                }
                if let Some(min) = filter.min_version {
                    if stored.unit.version < min {
                        continue;
                    }
                }
                if let Some(states) = &filter.freshness_states {
                    let effective = if slot.live_count() >= 2 {
                        FreshnessState::Conflicted
                    } else {
                        stored.freshness
                    };
                    if !states.contains(&effective) {
                        continue;
                    }
                }
                out.push(stored.unit.clone());
            }
        }
        out.sort_by(|a, b| {
            a.metadata
                .path
                .cmp(&b.metadata.path)
                .then(b.version.cmp(&a.version))
        });
        Ok(out)
    }

    /// Live units with their freshness annotations — the router's candidate
    /// collection call. Conflicted slots report every live version as
    /// conflicted.
    pub fn annotated_live_units(&self, domain: &str) -> Result<Vec<AnnotatedUnit>, RegistryError> {
        let state = self.state.read();
        if !state.domains.contains_key(domain) {
            return Err(RegistryError::UnknownDomain(domain.to_owned()));
        }
        let mut out = Vec::new();
        for ((d, _, _), slot) in &state.slots {
            if d != domain {
                continue;
            }
            let conflicted = slot.live_count() >= 2;
            for stored in slot.live() {
                let mut annotated = stored.annotated();
                if conflicted {
                    annotated.freshness = FreshnessState::Conflicted;
                }
                out.push(annotated);
            }
        }
        out.sort_by(|a, b| {
            a.unit
                .metadata
                .path
                .cmp(&b.unit.metadata.path)
                .then(b.unit.version.cmp(&a.unit.version))
        });
        Ok(out)
    }

    /// Newest stored version for a unit id (live or not).
    pub fn unit_current(&self, id: &str) -> Option<AnnotatedUnit> {
        let state = self.state.read();
        let key = state.id_index.get(id)?;
        state.slots.get(key)?.newest().map(|s| s.annotated())
    }

    /// All retained versions for a slot, newest first.
    pub fn unit_versions(&self, domain: &str, source: &str, path: &str) -> Vec<ContextUnit> {
        let state = self.state.read();
        let key = (domain.to_owned(), source.to_owned(), path.to_owned());
        state
            .slots
            .get(&key)
            .map(|slot| slot.versions.iter().rev().map(|s| s.unit.clone()).collect())
            .unwrap_or_default()
    }

    /// Stamp a freshness annotation onto every stored version of a unit.
    /// Returns false if the id is unknown.
    pub fn set_freshness(
        &self,
        unit_id: &str,
        freshness: FreshnessState,
        stale_since: Option<DateTime<Utc>>,
    ) -> bool {
        let mut state = self.state.write();
        let Some(key) = state.id_index.get(unit_id).cloned() else {
            return false;
        };
        let Some(slot) = state.slots.get_mut(&key) else {
            return false;
        };
        for stored in &mut slot.versions {
            stored.freshness = freshness;
            stored.stale_since = stale_since;
        }
        true
    }

    /// Re-sync bookkeeping: content confirmed against the source at `now`.
    pub fn touch_verified(&self, unit_id: &str, now: DateTime<Utc>) -> bool {
        let mut state = self.state.write();
        let Some(key) = state.id_index.get(unit_id).cloned() else {
            return false;
        };
        let Some(slot) = state.slots.get_mut(&key) else {
            return false;
        };
        for stored in &mut slot.versions {
            stored.last_verified = now;
            stored.freshness = FreshnessState::Fresh;
            stored.stale_since = None;
        }
        true
    }

    /// Remove a unit from the routable set; history is retained.
    pub fn archive_unit(&self, unit_id: &str) -> bool {
        let mut state = self.state.write();
        let Some(key) = state.id_index.get(unit_id).cloned() else {
            return false;
        };
        let Some(slot) = state.slots.get_mut(&key) else {
            return false;
        };
        let mut any = false;
        for stored in &mut slot.versions {
            any |= stored.live;
            stored.live = false;
        }
        any
    }

    /// Replace the role set on every stored version of a unit, in place —
    /// no version bump, since the role set is derived from access rules,
    /// not content. An empty set is refused for the same reason it is at
    /// admission: a unit nobody may read must be archived, not laundered.
    pub fn set_authorized_roles(
        &self,
        unit_id: &str,
        roles: &BTreeSet<String>,
    ) -> Result<(), RegistryError> {
        if roles.is_empty() {
            return Err(RegistryError::EmptyAuthorizedRoles(unit_id.to_owned()));
        }
        let mut state = self.state.write();
        let Some(key) = state.id_index.get(unit_id).cloned() else {
            return Err(RegistryError::InvalidUnit {
                id: unit_id.to_owned(),
                reason: "unknown unit id".into(),
            });
        };
        let Some(slot) = state.slots.get_mut(&key) else {
            return Err(RegistryError::InvalidUnit {
                id: unit_id.to_owned(),
                reason: "unknown unit id".into(),
            });
        };
        for stored in &mut slot.versions {
            stored.unit.authorized_roles = roles.clone();
        }
        Ok(())
    }

    /// Slots with two or more live versions: (source, path, live versions
    /// oldest → newest).
    pub fn conflicted_slots(&self, domain: &str) -> Vec<(String, String, Vec<ContextUnit>)> {
        let state = self.state.read();
        let mut out = Vec::new();
        for ((d, source, path), slot) in &state.slots {
            if d == domain && slot.live_count() >= 2 {
                out.push((
                    source.clone(),
                    path.clone(),
                    slot.live().map(|s| s.unit.clone()).collect(),
                ));
            }
        }
        out
    }

    /// Collapse a conflicted slot: highest content timestamp wins, ties go
    /// to the higher version; losers leave the routable set. Returns the
    /// winner. No-op (None) unless the slot is actually conflicted.
    pub fn resolve_conflict(
        &self,
        domain: &str,
        source: &str,
        path: &str,
    ) -> Option<ContextUnit> {
        let mut state = self.state.write();
        let key = (domain.to_owned(), source.to_owned(), path.to_owned());
        let slot = state.slots.get_mut(&key)?;
        if slot.live_count() < 2 {
            return None;
        }
        let winner_version = slot
            .live()
            .max_by(|a, b| {
                a.unit
                    .metadata
                    .timestamp
                    .cmp(&b.unit.metadata.timestamp)
                    .then(a.unit.version.cmp(&b.unit.version))
            })
            .map(|s| s.unit.version)?;
        let mut winner = None;
        for stored in &mut slot.versions {
            if stored.unit.version == winner_version {
                stored.freshness = FreshnessState::Fresh;
                stored.stale_since = None;
                winner = Some(stored.unit.clone());
            } else {
                stored.live = false;
            }
        }
        winner
    }

    /// Every live unit backed by one source — the dependents to flag when
    /// that source disconnects.
    pub fn units_from_source(&self, domain: &str, source: &str) -> Vec<ContextUnit> {
        let state = self.state.read();
        let mut out = Vec::new();
        for ((d, s, _), slot) in &state.slots {
            if d == domain && s == source {
                out.extend(slot.live().map(|st| st.unit.clone()));
            }
        }
        out
    }

    pub fn unit_count(&self) -> usize {
        self.state
            .read()
            .slots
            .values()
            .map(|s| s.live_count())
            .sum()
    }

    // ---- sources ----------------------------------------------------------

    /// Record one connector probe/sync outcome. Success resets the failure
    /// counter; failures escalate Connected → Degraded → (at the threshold)
    /// Disconnected.
    pub fn record_source_result(
        &self,
        domain: &str,
        source: &str,
        ok: bool,
        now: DateTime<Utc>,
    ) -> Result<SourceState, RegistryError> {
        let mut state = self.state.write();
        let entry = state
            .domains
            .get_mut(domain)
            .ok_or_else(|| RegistryError::UnknownDomain(domain.to_owned()))?;
        let src = entry
            .sources
            .get_mut(source)
            .ok_or_else(|| RegistryError::UnknownSource {
                domain: domain.to_owned(),
                name: source.to_owned(),
            })?;
        if ok {
            src.consecutive_failures = 0;
            src.status = SourceStatus::Connected;
            src.last_success = Some(now);
        } else {
            src.consecutive_failures += 1;
            src.status = if src.consecutive_failures >= self.failure_threshold {
                SourceStatus::Disconnected
            } else {
                SourceStatus::Degraded
            };
        }
        Ok(src.clone())
    }

    pub fn source_state(&self, domain: &str, source: &str) -> Option<SourceState> {
        self.state
            .read()
            .domains
            .get(domain)?
            .sources
            .get(source)
            .cloned()
    }

    pub fn source_states(&self, domain: &str) -> Result<Vec<SourceState>, RegistryError> {
        let state = self.state.read();
        let entry = state
            .domains
            .get(domain)
            .ok_or_else(|| RegistryError::UnknownDomain(domain.to_owned()))?;
        Ok(entry.sources.values().cloned().collect())
    }

    // ---- export -----------------------------------------------------------

    /// One JSON object per stored unit version, deterministic order by
    /// (domain, source, path, version).
    pub fn export_snapshot(&self, out: &mut impl Write) -> std::io::Result<()> {
        let state = self.state.read();
        for slot in state.slots.values() {
            for stored in &slot.versions {
                let line = serde_json::to_string(&stored.unit)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}
