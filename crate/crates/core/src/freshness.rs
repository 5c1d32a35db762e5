//! Content lifecycle and reconciliation: freshness states, the deltas a
//! reconcile cycle can detect, and the corrective actions that close them.
//!
//! Freshness is computed from verification age against the governing
//! policy: content verified within `maxAge` is fresh, within twice that is
//! stale, beyond is expired. States only worsen with time; only an actual
//! re-verification against the source resets them. Conflicted (two live
//! versions of one slot) overrides everything until resolved.
//!
//! The reconciler is a level-triggered loop in the controller style: each
//! cycle observes every declared source and live unit, emits a delta for
//! each divergence from the declared intent, and applies exactly one
//! corrective action per delta. Connector failures are recorded and
//! reported — they never abort a cycle.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::audit::{AuditLog, EventDraft, EventKind};
use crate::cxri::{self, Connection, CxriError, IngestPolicy, Subscription};
use crate::manifest::{DomainManifest, ManifestChange, StaleAction};
use crate::registry::{FreshnessState, Registry, SourceStatus};
use crate::timefmt;
use crate::vector::Vectorizer;

/// Stale content expires after this many times the governing max age.
pub const EXPIRED_FACTOR: u64 = 2;

/// Default reconcile interval for the long-running service.
pub const DEFAULT_RECONCILE_INTERVAL_SECS: u64 = 5;

/// State implied by verification age alone.
pub fn state_for_age(age_seconds: i64, max_age_seconds: u64) -> FreshnessState {
    if age_seconds <= max_age_seconds as i64 {
        FreshnessState::Fresh
    } else if age_seconds <= (EXPIRED_FACTOR * max_age_seconds) as i64 {
        FreshnessState::Stale
    } else {
        FreshnessState::Expired
    }
}

/// Effective state of a unit right now: the age-implied state, floored by
/// whatever was already stamped (states never improve without
/// re-verification), with conflicts overriding both.
pub fn effective_state(
    stamped: FreshnessState,
    last_verified: DateTime<Utc>,
    max_age_seconds: u64,
    now: DateTime<Utc>,
) -> FreshnessState {
    if stamped == FreshnessState::Conflicted {
        return FreshnessState::Conflicted;
    }
    let age = (now - last_verified).num_seconds().max(0);
    stamped.max(state_for_age(age, max_age_seconds))
}

/// Everything a reconcile cycle can notice. Only the first three are acted
/// on; the rest are recognized and explicitly reported as out of scope so
/// they are never silently swallowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    SourceDisconnected,
    ContextStale,
    PermissionChange,
    OperatorUnhealthy,
    Anomaly,
    ReliabilityDrift,
}

impl DeltaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeltaKind::SourceDisconnected => "source_disconnected",
            DeltaKind::ContextStale => "context_stale",
            DeltaKind::PermissionChange => "permission_change",
            DeltaKind::OperatorUnhealthy => "operator_unhealthy",
            DeltaKind::Anomaly => "anomaly",
            DeltaKind::ReliabilityDrift => "reliability_drift",
        }
    }

    /// Whether this build knows how to correct the delta.
    pub fn in_scope(self) -> bool {
        matches!(
            self,
            DeltaKind::SourceDisconnected | DeltaKind::ContextStale | DeltaKind::PermissionChange
        )
    }
}

impl fmt::Display for DeltaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeltaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source_disconnected" => Ok(DeltaKind::SourceDisconnected),
            "context_stale" => Ok(DeltaKind::ContextStale),
            "permission_change" => Ok(DeltaKind::PermissionChange),
            "operator_unhealthy" => Ok(DeltaKind::OperatorUnhealthy),
            "anomaly" => Ok(DeltaKind::Anomaly),
            "reliability_drift" => Ok(DeltaKind::ReliabilityDrift),
            other => Err(format!("unknown delta kind {other:?}")),
        }
    }
}

/// One observed divergence between declared and actual state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub kind: DeltaKind,
    pub domain: String,
    /// Source name or unit id, depending on kind.
    pub target: String,
    pub detail: String,
    #[serde(with = "timefmt")]
    pub detected_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Remedy {
    ConnectSource,
    RetireSource,
    MarkDependentsStale,
    IngestChange,
    ResyncUnit,
    FlagUnit,
    ArchiveUnit,
    RefreshRoles,
    ResolveConflict,
    /// Recorded but intentionally not acted on in this build.
    Observe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionResult {
    Applied,
    Failed,
    NotImplemented,
}

impl ActionResult {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionResult::Applied => "applied",
            ActionResult::Failed => "failed",
            ActionResult::NotImplemented => "not_implemented",
        }
    }
}

/// One corrective step taken during a cycle. Actions answering a detected
/// delta carry its kind; routine sync work (ingesting a changed file,
/// connecting a newly declared source) carries none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconcileAction {
    pub remedy: Remedy,
    pub domain: String,
    pub target: String,
    pub result: ActionResult,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<DeltaKind>,
}

/// What one reconcile pass observed and did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle_id: u64,
    #[serde(with = "timefmt")]
    pub started_at: DateTime<Utc>,
    pub duration_ms: f64,
    pub deltas: Vec<Delta>,
    pub actions: Vec<ReconcileAction>,
}

/// A staged declaration change for the reconciler to propagate.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedChange {
    pub domain: String,
    pub change: ManifestChange,
}

/// A live connection plus the subscription the reconciler polls on it.
pub struct SourceLink {
    pub connection: Connection,
    pub subscription: Subscription,
}

/// Connections keyed by (domain, source).
pub type LinkMap = HashMap<(String, String), SourceLink>;

/// Level-triggered reconciler. Holds only the cycle counter; all real
/// state lives in the registry and the link map it is handed each cycle.
#[derive(Debug, Default)]
pub struct Reconciler {
    next_cycle: u64,
}

impl Reconciler {
    pub fn new() -> Self {
        Reconciler::default()
    }

    /// Run one full pass: propagate staged manifest changes, probe and sync
    /// every declared source, resolve conflicted slots, then walk every live
    /// unit's freshness against its governing policy. Each detected delta
    /// yields exactly one corrective action, and every action is audited.
    pub fn reconcile_once(
        &mut self,
        registry: &Registry,
        links: &mut LinkMap,
        vectorizer: &Vectorizer,
        audit: &AuditLog,
        staged: Vec<StagedChange>,
        now: DateTime<Utc>,
    ) -> CycleReport {
        let started = Instant::now();
        self.next_cycle += 1;
        let mut report = CycleReport {
            cycle_id: self.next_cycle,
            started_at: now,
            duration_ms: 0.0,
            deltas: Vec::new(),
            actions: Vec::new(),
        };

        for change in staged {
            self.apply_staged(registry, links, &change, &mut report, audit, now);
        }

        for domain in registry.list_domains() {
            let Some(manifest) = registry.manifest(&domain) else {
                continue;
            };
            self.sync_sources(registry, links, vectorizer, &manifest, &mut report, audit, now);
            self.resolve_conflicts(registry, &manifest, &mut report, audit, now);
            self.walk_freshness(registry, links, vectorizer, &manifest, &mut report, audit, now);
        }

        report.duration_ms = started.elapsed().as_secs_f64() * 1000.0;
        report
    }

    /// Handle a delta submitted from outside the loop (operator tooling,
    /// upstream monitors). In-scope kinds are corrected on the next cycle
    /// anyway; the out-of-scope kinds are acknowledged and explicitly left
    /// alone.
    pub fn acknowledge_external(
        &mut self,
        delta: Delta,
        report: &mut CycleReport,
        audit: &AuditLog,
        now: DateTime<Utc>,
    ) {
        let action = ReconcileAction {
            remedy: Remedy::Observe,
            domain: delta.domain.clone(),
            target: delta.target.clone(),
            result: if delta.kind.in_scope() {
                ActionResult::Applied
            } else {
                ActionResult::NotImplemented
            },
            detail: if delta.kind.in_scope() {
                "queued for the regular reconcile pass".to_owned()
            } else {
                format!("{} handling is not part of this build", delta.kind)
            },
            answers: Some(delta.kind),
        };
        record(report, audit, Some(delta), action, now);
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_staged(
        &mut self,
        registry: &Registry,
        links: &mut LinkMap,
        staged: &StagedChange,
        report: &mut CycleReport,
        audit: &AuditLog,
        now: DateTime<Utc>,
    ) {
        let domain = staged.domain.clone();
        match &staged.change {
            ManifestChange::SourceRemoved(name) => {
                links.remove(&(domain.clone(), name.clone()));
                let units = registry.units_from_source(&domain, name);
                let count = units.len();
                for unit in units {
                    registry.archive_unit(&unit.id);
                }
                record(
                    report,
                    audit,
                    None,
                    ReconcileAction {
                        remedy: Remedy::RetireSource,
                        domain,
                        target: name.clone(),
                        result: ActionResult::Applied,
                        detail: format!("source no longer declared; {count} units archived"),
                        answers: None,
                    },
                    now,
                );
            }
            ManifestChange::SourceChanged(name) => {
                links.remove(&(domain.clone(), name.clone()));
                record(
                    report,
                    audit,
                    None,
                    ReconcileAction {
                        remedy: Remedy::ConnectSource,
                        domain,
                        target: name.clone(),
                        result: ActionResult::Applied,
                        detail: "source declaration changed; reconnecting".to_owned(),
                        answers: None,
                    },
                    now,
                );
            }
            ManifestChange::SourceAdded(name) => {
                record(
                    report,
                    audit,
                    None,
                    ReconcileAction {
                        remedy: Remedy::ConnectSource,
                        domain,
                        target: name.clone(),
                        result: ActionResult::Applied,
                        detail: "newly declared source; connecting".to_owned(),
                        answers: None,
                    },
                    now,
                );
            }
            ManifestChange::Access => {
                // Connections embed the role derivation policy; drop them so
                // they reconnect under the new rules, then re-derive role
                // sets for everything already ingested.
                links.retain(|(d, _), _| d != &domain);
                let mut refreshed = 0usize;
                let mut archived = 0usize;
                if let Some(manifest) = registry.manifest(&domain) {
                    let policy = IngestPolicy::from_manifest(&manifest);
                    if let Ok(units) = registry.annotated_live_units(&domain) {
                        for annotated in units {
                            let unit = annotated.unit;
                            let roles = policy.roles_for(&unit.metadata.path);
                            if roles.is_empty() {
                                registry.archive_unit(&unit.id);
                                archived += 1;
                            } else if registry.set_authorized_roles(&unit.id, &roles).is_ok() {
                                refreshed += 1;
                            }
                        }
                    }
                }
                let delta = Delta {
                    kind: DeltaKind::PermissionChange,
                    domain: domain.clone(),
                    target: domain.clone(),
                    detail: "access rules changed".to_owned(),
                    detected_at: now,
                };
                record(
                    report,
                    audit,
                    Some(delta),
                    ReconcileAction {
                        remedy: Remedy::RefreshRoles,
                        domain: domain.clone(),
                        target: domain,
                        result: ActionResult::Applied,
                        detail: format!(
                            "re-derived role sets for {refreshed} units, archived {archived} \
                             now-unreadable units"
                        ),
                        answers: Some(DeltaKind::PermissionChange),
                    },
                    now,
                );
            }
            ManifestChange::Metadata
            | ManifestChange::Freshness
            | ManifestChange::Routing => {
                record(
                    report,
                    audit,
                    None,
                    ReconcileAction {
                        remedy: Remedy::Observe,
                        domain: domain.clone(),
                        target: domain,
                        result: ActionResult::Applied,
                        detail: format!(
                            "{:?} updated; evaluated on use, nothing to repair",
                            staged.change
                        ),
                        answers: None,
                    },
                    now,
                );
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn sync_sources(
        &mut self,
        registry: &Registry,
        links: &mut LinkMap,
        vectorizer: &Vectorizer,
        manifest: &DomainManifest,
        report: &mut CycleReport,
        audit: &AuditLog,
        now: DateTime<Utc>,
    ) {
        let domain = manifest.name().to_owned();
        let policy = IngestPolicy::from_manifest(manifest);
        for source in manifest.sources() {
            let key = (domain.clone(), source.name.clone());
            let prior = registry
                .source_state(&domain, &source.name)
                .map(|s| s.status);

            let mut probe_ok = false;
            if links.contains_key(&key) {
                let poll = {
                    let link = links.get_mut(&key).expect("checked above");
                    if link.connection.health().status == SourceStatus::Connected {
                        Some(link.connection.poll(&mut link.subscription, now))
                    } else {
                        None
                    }
                };
                match poll {
                    Some(Ok(events)) => {
                        probe_ok = true;
                        let link = links.get_mut(&key).expect("checked above");
                        for event in &events {
                            apply_change_event(
                                registry, link, vectorizer, &domain, &source.name, event,
                                report, audit, now,
                            );
                        }
                    }
                    Some(Err(err)) => {
                        links.remove(&key);
                        record(
                            report,
                            audit,
                            None,
                            ReconcileAction {
                                remedy: Remedy::IngestChange,
                                domain: domain.clone(),
                                target: source.name.clone(),
                                result: ActionResult::Failed,
                                detail: format!("change poll failed: {err}"),
                                answers: None,
                            },
                            now,
                        );
                    }
                    None => {
                        links.remove(&key);
                    }
                }
            } else {
                match cxri::connect(source, policy.clone()) {
                    Ok(mut connection) => match initial_ingest(
                        registry,
                        &mut connection,
                        vectorizer,
                        now,
                    ) {
                        Ok((count, subscription)) => {
                            probe_ok = true;
                            links.insert(
                                key.clone(),
                                SourceLink {
                                    connection,
                                    subscription,
                                },
                            );
                            record(
                                report,
                                audit,
                                None,
                                ReconcileAction {
                                    remedy: Remedy::ConnectSource,
                                    domain: domain.clone(),
                                    target: source.name.clone(),
                                    result: ActionResult::Applied,
                                    detail: format!("connected; {count} units ingested"),
                                    answers: None,
                                },
                                now,
                            );
                        }
                        Err(err) => {
                            record(
                                report,
                                audit,
                                None,
                                ReconcileAction {
                                    remedy: Remedy::ConnectSource,
                                    domain: domain.clone(),
                                    target: source.name.clone(),
                                    result: ActionResult::Failed,
                                    detail: format!("connected but ingest failed: {err}"),
                                    answers: None,
                                },
                                now,
                            );
                        }
                    },
                    Err(err) => {
                        record(
                            report,
                            audit,
                            None,
                            ReconcileAction {
                                remedy: Remedy::ConnectSource,
                                domain: domain.clone(),
                                target: source.name.clone(),
                                result: ActionResult::Failed,
                                detail: err.to_string(),
                                answers: None,
                            },
                            now,
                        );
                    }
                }
            }

            let new_state = registry
                .record_source_result(&domain, &source.name, probe_ok, now)
                .ok();
            let Some(new_state) = new_state else { continue };
            if prior != Some(new_state.status) {
                let _ = audit.append_at(
                    EventDraft::new(EventKind::SourceStateChange, status_str(new_state.status))
                        .domain(&domain)
                        .detail("source", &source.name)
                        .detail(
                            "from",
                            prior.map_or("unregistered", status_str),
                        )
                        .detail("consecutive_failures", new_state.consecutive_failures.to_string()),
                    now,
                );
                if new_state.status == SourceStatus::Disconnected {
                    let delta = Delta {
                        kind: DeltaKind::SourceDisconnected,
                        domain: domain.clone(),
                        target: source.name.clone(),
                        detail: format!(
                            "{} consecutive failures",
                            new_state.consecutive_failures
                        ),
                        detected_at: now,
                    };
                    let mut marked = 0usize;
                    for unit in registry.units_from_source(&domain, &source.name) {
                        if let Some(current) = registry.unit_current(&unit.id) {
                            if current.freshness == FreshnessState::Fresh {
                                registry.set_freshness(
                                    &unit.id,
                                    FreshnessState::Stale,
                                    Some(now),
                                );
                                marked += 1;
                            }
                        }
                    }
                    record(
                        report,
                        audit,
                        Some(delta),
                        ReconcileAction {
                            remedy: Remedy::MarkDependentsStale,
                            domain: domain.clone(),
                            target: source.name.clone(),
                            result: ActionResult::Applied,
                            detail: format!("{marked} dependent units marked stale"),
                            answers: Some(DeltaKind::SourceDisconnected),
                        },
                        now,
                    );
                }
            }
        }
    }

    fn resolve_conflicts(
        &mut self,
        registry: &Registry,
        manifest: &DomainManifest,
        report: &mut CycleReport,
        audit: &AuditLog,
        now: DateTime<Utc>,
    ) {
        let domain = manifest.name();
        for (source, path, versions) in registry.conflicted_slots(domain) {
            let candidates = versions.len();
            if let Some(winner) = registry.resolve_conflict(domain, &source, &path) {
                record(
                    report,
                    audit,
                    None,
                    ReconcileAction {
                        remedy: Remedy::ResolveConflict,
                        domain: domain.to_owned(),
                        target: winner.id.clone(),
                        result: ActionResult::Applied,
                        detail: format!(
                            "kept version {} (newest of {candidates} live versions)",
                            winner.version
                        ),
                        answers: None,
                    },
                    now,
                );
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn walk_freshness(
        &mut self,
        registry: &Registry,
        links: &mut LinkMap,
        vectorizer: &Vectorizer,
        manifest: &DomainManifest,
        report: &mut CycleReport,
        audit: &AuditLog,
        now: DateTime<Utc>,
    ) {
        let domain = manifest.name().to_owned();
        let freshness_spec = manifest.freshness().clone();
        let Ok(units) = registry.annotated_live_units(&domain) else {
            return;
        };
        for annotated in units {
            if annotated.freshness == FreshnessState::Conflicted {
                continue; // resolved earlier in the cycle, or injected mid-flight
            }
            let rule = freshness_spec.rule_for(&annotated.unit.metadata.path);
            let effective = effective_state(
                annotated.freshness,
                annotated.last_verified,
                rule.max_age.as_seconds(),
                now,
            );
            if effective == annotated.freshness {
                continue;
            }
            let unit = &annotated.unit;
            let age = (now - annotated.last_verified).num_seconds();
            let delta = Delta {
                kind: DeltaKind::ContextStale,
                domain: domain.clone(),
                target: unit.id.clone(),
                detail: format!(
                    "{} → {} (verified {age}s ago, max age {}s)",
                    state_str(annotated.freshness),
                    state_str(effective),
                    rule.max_age.as_seconds()
                ),
                detected_at: now,
            };
            let stale_since = annotated.stale_since.unwrap_or(now);
            let action = match rule.stale_action {
                StaleAction::ReSync => {
                    let link = links.get_mut(&(domain.clone(), unit.metadata.source.clone()));
                    resync_unit(registry, link, vectorizer, unit, effective, stale_since, now)
                }
                StaleAction::Flag => {
                    registry.set_freshness(&unit.id, effective, Some(stale_since));
                    ReconcileAction {
                        remedy: Remedy::FlagUnit,
                        domain: domain.clone(),
                        target: unit.id.clone(),
                        result: ActionResult::Applied,
                        detail: format!("flagged {}", state_str(effective)),
                        answers: Some(DeltaKind::ContextStale),
                    }
                }
                StaleAction::Archive => {
                    registry.archive_unit(&unit.id);
                    ReconcileAction {
                        remedy: Remedy::ArchiveUnit,
                        domain: domain.clone(),
                        target: unit.id.clone(),
                        result: ActionResult::Applied,
                        detail: format!("{}; archived per policy", state_str(effective)),
                        answers: Some(DeltaKind::ContextStale),
                    }
                }
            };
            record(report, audit, Some(delta), action, now);
        }
    }
}

/// Read every entry of a freshly connected source into the registry.
fn initial_ingest(
    registry: &Registry,
    connection: &mut Connection,
    vectorizer: &Vectorizer,
    now: DateTime<Utc>,
) -> Result<(usize, Subscription), CxriError> {
    let units = connection.query("")?;
    let subscription = connection.subscribe("*")?;
    let mut count = 0usize;
    for mut unit in units {
        unit.vector = vectorizer.embed(&unit.content);
        let id = unit.id.clone();
        if registry.upsert_unit(unit).is_ok() {
            registry.touch_verified(&id, now);
            count += 1;
        }
    }
    Ok((count, subscription))
}

/// Apply one subscription event: re-read created/modified entries, archive
/// deleted ones.
#[allow(clippy::too_many_arguments)]
fn apply_change_event(
    registry: &Registry,
    link: &mut SourceLink,
    vectorizer: &Vectorizer,
    domain: &str,
    source: &str,
    event: &cxri::ChangeEvent,
    report: &mut CycleReport,
    audit: &AuditLog,
    now: DateTime<Utc>,
) {
    let target = cxri::unit_id(domain, source, &event.path);
    let action = match event.kind {
        cxri::ChangeKind::Created | cxri::ChangeKind::Modified => {
            match link.connection.read(&event.path) {
                Ok(mut unit) => {
                    unit.vector = vectorizer.embed(&unit.content);
                    let id = unit.id.clone();
                    match registry.upsert_unit(unit) {
                        Ok(version) => {
                            registry.touch_verified(&id, now);
                            ReconcileAction {
                                remedy: Remedy::IngestChange,
                                domain: domain.to_owned(),
                                target,
                                result: ActionResult::Applied,
                                detail: format!("{:?} ingested as version {version}", event.kind),
                                answers: None,
                            }
                        }
                        Err(err) => ReconcileAction {
                            remedy: Remedy::IngestChange,
                            domain: domain.to_owned(),
                            target,
                            result: ActionResult::Failed,
                            detail: err.to_string(),
                            answers: None,
                        },
                    }
                }
                Err(err) => ReconcileAction {
                    remedy: Remedy::IngestChange,
                    domain: domain.to_owned(),
                    target,
                    result: ActionResult::Failed,
                    detail: format!("re-read failed: {err}"),
                    answers: None,
                },
            }
        }
        cxri::ChangeKind::Deleted => {
            let archived = registry.archive_unit(&target);
            ReconcileAction {
                remedy: Remedy::ArchiveUnit,
                domain: domain.to_owned(),
                target,
                result: ActionResult::Applied,
                detail: if archived {
                    "source deleted the entry; archived".to_owned()
                } else {
                    "source deleted an entry that was never ingested".to_owned()
                },
                answers: None,
            }
        }
    };
    record(report, audit, None, action, now);
}

/// Re-verify one stale unit against its source. Unchanged content is
/// re-stamped fresh; changed content becomes a new version; a vanished
/// entry is archived; an unreachable source leaves the unit stamped with
/// its computed state so the annotation is honest.
fn resync_unit(
    registry: &Registry,
    link: Option<&mut SourceLink>,
    vectorizer: &Vectorizer,
    unit: &crate::registry::ContextUnit,
    effective: FreshnessState,
    stale_since: DateTime<Utc>,
    now: DateTime<Utc>,
) -> ReconcileAction {
    let domain = unit.metadata.domain.clone();
    let base = ReconcileAction {
        remedy: Remedy::ResyncUnit,
        domain,
        target: unit.id.clone(),
        result: ActionResult::Applied,
        detail: String::new(),
        answers: Some(DeltaKind::ContextStale),
    };
    let Some(link) = link else {
        registry.set_freshness(&unit.id, effective, Some(stale_since));
        return ReconcileAction {
            result: ActionResult::Failed,
            detail: format!("source disconnected; stamped {}", state_str(effective)),
            ..base
        };
    };
    match link.connection.read(&unit.metadata.path) {
        Ok(mut fetched) => {
            fetched.vector = vectorizer.embed(&fetched.content);
            let id = fetched.id.clone();
            match registry.upsert_unit(fetched) {
                Ok(version) => {
                    registry.touch_verified(&id, now);
                    ReconcileAction {
                        detail: format!("re-verified against source (version {version})"),
                        ..base
                    }
                }
                Err(err) => {
                    registry.set_freshness(&unit.id, effective, Some(stale_since));
                    ReconcileAction {
                        result: ActionResult::Failed,
                        detail: format!("re-ingest refused: {err}"),
                        ..base
                    }
                }
            }
        }
        Err(CxriError::NotFound(_)) => {
            registry.archive_unit(&unit.id);
            ReconcileAction {
                remedy: Remedy::ArchiveUnit,
                detail: "source no longer provides this entry; archived".to_owned(),
                ..base
            }
        }
        Err(err) => {
            registry.set_freshness(&unit.id, effective, Some(stale_since));
            ReconcileAction {
                result: ActionResult::Failed,
                detail: format!("re-sync failed: {err}; stamped {}", state_str(effective)),
                ..base
            }
        }
    }
}

fn record(
    report: &mut CycleReport,
    audit: &AuditLog,
    delta: Option<Delta>,
    action: ReconcileAction,
    now: DateTime<Utc>,
) {
    let mut draft = EventDraft::new(EventKind::ReconcileDelta, action.result.as_str())
        .domain(&action.domain)
        .detail("remedy", format!("{:?}", action.remedy))
        .detail("target", &action.target)
        .detail("note", &action.detail);
    if let Some(delta) = &delta {
        draft = draft.detail("delta", delta.kind.as_str());
    }
    let _ = audit.append_at(draft, now);
    if let Some(delta) = delta {
        report.deltas.push(delta);
    }
    report.actions.push(action);
}

fn status_str(status: SourceStatus) -> &'static str {
    match status {
        SourceStatus::Connected => "connected",
        SourceStatus::Degraded => "degraded",
        SourceStatus::Disconnected => "disconnected",
    }
}

fn state_str(state: FreshnessState) -> &'static str {
    match state {
        FreshnessState::Fresh => "fresh",
        FreshnessState::Stale => "stale",
        FreshnessState::Expired => "expired",
        FreshnessState::Conflicted => "conflicted",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 5, 1, 12, 0, 0).unwrap()
    }

    #[test]
    fn age_thresholds_are_half_open() {
        let max = 3600u64;
        assert_eq!(state_for_age(0, max), FreshnessState::Fresh);
        assert_eq!(state_for_age(3600, max), FreshnessState::Fresh);
        assert_eq!(state_for_age(3601, max), FreshnessState::Stale);
        assert_eq!(state_for_age(7200, max), FreshnessState::Stale);
        assert_eq!(state_for_age(7201, max), FreshnessState::Expired);
    }

    #[test]
    fn stamped_state_is_a_floor() {
        let verified = t0();
        let soon = t0() + Duration::minutes(1);
        // Age says fresh, but a stamp (for example from a disconnect) holds.
        assert_eq!(
            effective_state(FreshnessState::Stale, verified, 3600, soon),
            FreshnessState::Stale
        );
        // Age can worsen past the stamp.
        let late = t0() + Duration::hours(3);
        assert_eq!(
            effective_state(FreshnessState::Stale, verified, 3600, late),
            FreshnessState::Expired
        );
        // Conflicts override age entirely.
        assert_eq!(
            effective_state(FreshnessState::Conflicted, verified, 3600, late),
            FreshnessState::Conflicted
        );
    }

    #[test]
    fn effective_state_is_monotone_in_time() {
        let verified = t0();
        let mut prev = FreshnessState::Fresh;
        for minutes in (0..300).step_by(10) {
            let s = effective_state(
                FreshnessState::Fresh,
                verified,
                3600,
                t0() + Duration::minutes(minutes),
            );
            assert!(s >= prev, "state regressed from {prev:?} to {s:?}");
            prev = s;
        }
    }

    #[test]
    fn delta_kinds_round_trip_and_scope_is_explicit() {
        for kind in [
            DeltaKind::SourceDisconnected,
            DeltaKind::ContextStale,
            DeltaKind::PermissionChange,
            DeltaKind::OperatorUnhealthy,
            DeltaKind::Anomaly,
            DeltaKind::ReliabilityDrift,
        ] {
            assert_eq!(kind.as_str().parse::<DeltaKind>().unwrap(), kind);
        }
        assert!("quantum_flux".parse::<DeltaKind>().is_err());
        assert!(DeltaKind::SourceDisconnected.in_scope());
        assert!(DeltaKind::ContextStale.in_scope());
        assert!(DeltaKind::PermissionChange.in_scope());
        assert!(!DeltaKind::OperatorUnhealthy.in_scope());
        assert!(!DeltaKind::Anomaly.in_scope());
        assert!(!DeltaKind::ReliabilityDrift.in_scope());
    }

    #[test]
    fn out_of_scope_deltas_are_acknowledged_not_swallowed() {
        let audit = AuditLog::in_memory();
        let mut reconciler = Reconciler::new();
        let mut report = CycleReport {
            cycle_id: 1,
            started_at: t0(),
            duration_ms: 0.0,
            deltas: Vec::new(),
            actions: Vec::new(),
        };
        reconciler.acknowledge_external(
            Delta {
                kind: DeltaKind::Anomaly,
                domain: "sales".into(),
                target: "records".into(),
                detail: "sync divergence reported upstream".into(),
                detected_at: t0(),
            },
            &mut report,
            &audit,
            t0(),
        );
        assert_eq!(report.deltas.len(), 1);
        assert_eq!(report.actions.len(), 1);
        assert_eq!(report.actions[0].result, ActionResult::NotImplemented);
        assert_eq!(audit.count(EventKind::ReconcileDelta), 1);
    }
}
