//! The assembled control plane.
//!
//! `ContextPlane` wires the registry, permission engine, router,
//! reconciler, and audit log into one façade and enforces the rules no
//! single module can enforce alone:
//!
//! - **Write-ahead auditing.** A governed operation (context delivery,
//!   action execution, approval) is recorded before its result leaves the
//!   plane. If the ledger cannot take the record, the result is withheld.
//! - **Fail-closed gates.** An unavailable permission engine, an unknown or
//!   killed session, or a dead audit backend all deny; nothing degrades to
//!   open.
//! - **Delivery-time freshness.** Stored freshness stamps are floors, not
//!   truth; every delivered unit is re-aged against its governing policy at
//!   request time. Expired and conflicted content is withheld even if no
//!   reconcile cycle has caught it yet.
//! - **Cross-domain brokering.** A session's home manifest decides which
//!   foreign domains its queries may draw from; the requester's own role
//!   and scope are re-checked inside each foreign domain.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditError, AuditLog, EventDraft, EventKind};
use crate::freshness::{
    effective_state, CycleReport, LinkMap, Reconciler, StagedChange, DEFAULT_RECONCILE_INTERVAL_SECS,
};
use crate::manifest::{self, CrossDomainMode, ManifestChange, ManifestError};
use crate::permissions::{
    Action, ActionOutcome, AgentProfile, Channel, DenyReason, Engine, KillScope, PendingApproval,
    PermissionError, Session, Tier, UserRole,
};
use crate::registry::{
    token_count, FreshnessState, Registry, RegistryError, SourceState,
};
use crate::router::{self, Candidate, Intent, Router, SignalBreakdown, Taxonomy};
use crate::vector::Vectorizer;

#[derive(Debug, Error)]
pub enum PlaneError {
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Permission(#[from] PermissionError),
    #[error("audit log unavailable: {0}")]
    Audit(#[from] AuditError),
    #[error("denied: {0}")]
    Denied(DenyReason),
}

/// Result of applying a manifest document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppliedManifest {
    pub domain: String,
    /// True when this was the first manifest for the domain.
    pub created: bool,
    /// Section-level changes staged for the next reconcile cycle (empty for
    /// a first apply; the cycle connects declared sources either way).
    pub changes: Vec<ManifestChange>,
}

/// One unit as delivered to an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveredUnit {
    pub id: String,
    pub domain: String,
    pub path: String,
    pub version: u64,
    pub content: String,
    /// Effective state at delivery time (never expired or conflicted —
    /// those are withheld).
    pub freshness: FreshnessState,
    pub score: f64,
    pub signals: SignalBreakdown,
    pub tokens: u64,
    pub truncated: bool,
}

/// What a context request returns: the router's reading of the query and
/// the budgeted, ranked, access-filtered units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextResponse {
    pub intent: Intent,
    pub units: Vec<DeliveredUnit>,
    pub total_tokens: u64,
    pub budget: u64,
}

pub struct ContextPlane {
    registry: Registry,
    engine: RwLock<Engine>,
    router: RwLock<Router>,
    vectorizer: RwLock<Vectorizer>,
    links: Mutex<LinkMap>,
    reconciler: Mutex<Reconciler>,
    staged: Mutex<Vec<StagedChange>>,
    audit: AuditLog,
}

impl ContextPlane {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self::with_audit(taxonomy, AuditLog::in_memory())
    }

    pub fn with_audit(taxonomy: Taxonomy, audit: AuditLog) -> Self {
        ContextPlane {
            registry: Registry::new(),
            engine: RwLock::new(Engine::new()),
            router: RwLock::new(Router::new(taxonomy)),
            vectorizer: RwLock::new(Vectorizer::uniform()),
            links: Mutex::new(LinkMap::new()),
            reconciler: Mutex::new(Reconciler::new()),
            staged: Mutex::new(Vec::new()),
            audit,
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    // ---- declarations -----------------------------------------------------

    /// Parse and apply one manifest document. A new domain is registered
    /// as-is; an update is diffed and the differences staged for the next
    /// reconcile cycle.
    pub fn apply_manifest(&self, yaml: &str) -> Result<AppliedManifest, PlaneError> {
        let parsed = manifest::parse_manifest(yaml)?;
        let domain = parsed.name().to_owned();
        if self.registry.has_domain(&domain) {
            let changes = self.registry.replace_manifest(parsed)?;
            self.staged
                .lock()
                .extend(changes.iter().cloned().map(|change| StagedChange {
                    domain: domain.clone(),
                    change,
                }));
            Ok(AppliedManifest {
                domain,
                created: false,
                changes,
            })
        } else {
            self.registry.register_domain(parsed)?;
            Ok(AppliedManifest {
                domain,
                created: true,
                changes: Vec::new(),
            })
        }
    }

    // ---- governance wiring ------------------------------------------------

    pub fn register_role(&self, role: UserRole) -> Result<(), PermissionError> {
        self.engine.write().register_role(role)
    }

    pub fn register_profile(&self, profile: AgentProfile) -> Result<(), PermissionError> {
        self.engine.write().register_profile(profile)
    }

    pub fn set_engine_available(&self, available: bool) {
        self.engine.write().set_available(available);
    }

    pub fn engine_available(&self) -> bool {
        self.engine.read().is_available()
    }

    /// Open a session. The session exists only if its creation is on the
    /// ledger: an audit failure rolls the session back killed.
    pub fn create_session(
        &self,
        user: &str,
        role: &str,
        agent_profile: &str,
        domain: &str,
        assigned: Vec<String>,
        now: DateTime<Utc>,
    ) -> Result<Session, PlaneError> {
        if !self.registry.has_domain(domain) {
            return Err(PlaneError::UnknownDomain(domain.to_owned()));
        }
        let session = self
            .engine
            .write()
            .create_session(user, role, agent_profile, domain, assigned, now)?;
        let draft = EventDraft::new(EventKind::SessionCreated, "created")
            .session(&session.id)
            .user(user)
            .agent(agent_profile)
            .domain(domain)
            .detail("role", role);
        if let Err(err) = self.audit.append_at(draft, now) {
            self.engine
                .write()
                .kill(&KillScope::Session(session.id.clone()));
            return Err(PlaneError::Audit(err));
        }
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        self.engine.read().session(id).cloned()
    }

    /// Throw the kill switch over a session, a user, or everything.
    /// Killing never waits on the ledger — the record is written
    /// best-effort after the fact, because a safety stop that can be
    /// blocked by a logging outage is not a safety stop.
    pub fn kill(&self, scope: &KillScope, now: DateTime<Utc>) -> usize {
        let killed = self.engine.write().kill(scope);
        let target = match scope {
            KillScope::Session(id) => format!("session {id}"),
            KillScope::User(user) => format!("user {user}"),
            KillScope::Global => "all sessions".to_owned(),
        };
        let mut draft = EventDraft::new(EventKind::SessionKilled, format!("{killed} killed"))
            .detail("scope", target);
        if let KillScope::Session(id) = scope {
            draft = draft.session(id);
        }
        if let KillScope::User(user) = scope {
            draft = draft.user(user);
        }
        let _ = self.audit.append_at(draft, now);
        killed
    }

    // ---- context delivery -------------------------------------------------

    /// Serve one context request end to end: gate, classify, collect,
    /// access-filter, freshness-screen, rank, budget, and deliver — with
    /// the request and the delivery both on the ledger before the response
    /// leaves.
    pub fn request_context(
        &self,
        session_id: &str,
        query: &str,
        budget_override: Option<u64>,
        now: DateTime<Utc>,
    ) -> Result<ContextResponse, PlaneError> {
        let session = {
            let engine = self.engine.read();
            if !engine.is_available() {
                drop(engine);
                return Err(self.deny(session_id, query, DenyReason::EngineUnavailable, now));
            }
            match engine.session(session_id) {
                None => {
                    drop(engine);
                    return Err(self.deny(session_id, query, DenyReason::UnknownSession, now));
                }
                Some(s) if s.killed => {
                    let reason = DenyReason::SessionKilled;
                    drop(engine);
                    return Err(self.deny(session_id, query, reason, now));
                }
                Some(s) => s.clone(),
            }
        };
        let home = session.domain.clone();
        let home_manifest = self
            .registry
            .manifest(&home)
            .ok_or_else(|| PlaneError::UnknownDomain(home.clone()))?;

        // Write-ahead: the request is on the record before any content
        // is assembled, and a dead ledger stops the request here.
        self.audit.append_at(
            EventDraft::new(EventKind::ContextRequested, "accepted")
                .session(session_id)
                .user(&session.user)
                .domain(&home)
                .detail("query", query),
            now,
        )?;

        let intent = self
            .router
            .read()
            .classify(query, &home, session.scope.last_entity.as_deref());
        if let Some(entity) = intent.entities.last() {
            self.engine.write().note_entity(session_id, entity);
        }

        // The home domain always contributes; foreign domains only when the
        // intent points there and the home manifest brokers them. Undeclared
        // domains are denied by omission.
        let mut domains = vec![home.clone()];
        for dc in &intent.domains {
            if dc.domain != home
                && home_manifest.access().cross_domain_mode(&dc.domain)
                    == Some(CrossDomainMode::Brokered)
                && self.registry.has_domain(&dc.domain)
            {
                domains.push(dc.domain.clone());
            }
        }

        let mut candidates = Vec::new();
        {
            let engine = self.engine.read();
            for domain in &domains {
                let Some(manifest) = self.registry.manifest(domain) else {
                    continue;
                };
                let Ok(units) = self.registry.annotated_live_units(domain) else {
                    continue;
                };
                for mut annotated in units {
                    if !engine
                        .check_access(session_id, manifest.access(), &annotated.unit)
                        .is_allow()
                    {
                        continue;
                    }
                    let rule = manifest
                        .freshness()
                        .rule_for(&annotated.unit.metadata.path);
                    let effective = effective_state(
                        annotated.freshness,
                        annotated.last_verified,
                        rule.max_age.as_seconds(),
                        now,
                    );
                    if matches!(
                        effective,
                        FreshnessState::Expired | FreshnessState::Conflicted
                    ) {
                        continue;
                    }
                    annotated.freshness = effective;
                    candidates.push(Candidate {
                        annotated,
                        max_age_seconds: rule.max_age.as_seconds(),
                    });
                }
            }
        }

        let query_vector = self.vectorizer.read().embed(&intent.resolved_query);
        let ranked = router::rank(
            candidates,
            &query_vector,
            &session.scope.assigned,
            home_manifest.routing(),
            now,
        );
        let budget = budget_override.unwrap_or(u64::from(home_manifest.routing().token_budget));
        let delivered = router::apply_token_budget(ranked, budget);

        let units: Vec<DeliveredUnit> = delivered
            .into_iter()
            .map(|r| {
                let unit = r.annotated.unit;
                DeliveredUnit {
                    id: unit.id,
                    domain: unit.metadata.domain,
                    path: unit.metadata.path,
                    version: unit.version,
                    tokens: token_count(&unit.content),
                    content: unit.content,
                    freshness: r.annotated.freshness,
                    score: r.score,
                    signals: r.signals,
                    truncated: r.truncated,
                }
            })
            .collect();
        let total_tokens = units.iter().map(|u| u.tokens).sum::<u64>();

        // Delivery goes on the record before the response leaves the plane.
        self.audit.append_at(
            EventDraft::new(EventKind::ContextDelivered, format!("{} units", units.len()))
                .session(session_id)
                .user(&session.user)
                .domain(&home)
                .detail("tokens", total_tokens.to_string())
                .detail("budget", budget.to_string())
                .detail("top_domain", intent.top_domain().unwrap_or(&home)),
            now,
        )?;

        Ok(ContextResponse {
            intent,
            units,
            total_tokens,
            budget,
        })
    }

    /// Audit a refusal (best-effort — the refusal stands even if the ledger
    /// is down, since nothing was exposed) and hand back the error.
    fn deny(
        &self,
        session_id: &str,
        what: &str,
        reason: DenyReason,
        now: DateTime<Utc>,
    ) -> PlaneError {
        let _ = self.audit.append_at(
            EventDraft::new(EventKind::ContextDenied, reason.to_string())
                .session(session_id)
                .detail("request", what),
            now,
        );
        PlaneError::Denied(reason)
    }

    // ---- actions and approvals --------------------------------------------

    /// Submit an action under the target domain's permission map. The
    /// submission is recorded before the engine decides anything; the
    /// decision (executed, parked for approval, refused) is recorded after.
    pub fn submit_action(
        &self,
        session_id: &str,
        action: Action,
        now: DateTime<Utc>,
    ) -> Result<ActionOutcome, PlaneError> {
        let manifest = self
            .registry
            .manifest(&action.domain)
            .ok_or_else(|| PlaneError::UnknownDomain(action.domain.clone()))?;
        let user = self
            .engine
            .read()
            .session(session_id)
            .map(|s| s.user.clone());

        let mut draft = EventDraft::new(EventKind::ActionSubmitted, "received")
            .session(session_id)
            .domain(&action.domain)
            .detail("operation", &action.operation);
        if let Some(user) = &user {
            draft = draft.user(user);
        }
        if let Some(path) = &action.path {
            draft = draft.detail("path", path);
        }
        self.audit.append_at(draft, now)?;

        let outcome = self.engine.write().submit_action(
            session_id,
            &manifest.access().agent_permissions,
            action.clone(),
            now,
        )?;

        match &outcome {
            ActionOutcome::Executed { action_id } => {
                self.audit.append_at(
                    self.action_event(EventKind::ActionExecuted, "executed", session_id, &action, user.as_deref())
                        .detail("action_id", action_id),
                    now,
                )?;
            }
            ActionOutcome::Pending(approval) => {
                self.audit.append_at(
                    self.action_event(
                        EventKind::ApprovalRequested,
                        tier_str(approval.tier),
                        session_id,
                        &action,
                        user.as_deref(),
                    )
                    .detail("approval_id", &approval.id),
                    now,
                )?;
                if approval.tier == Tier::StrongApproval {
                    self.audit.append_at(
                        EventDraft::new(EventKind::OtpIssued, "issued")
                            .session(session_id)
                            .domain(&action.domain)
                            .detail("approval_id", &approval.id)
                            .detail("channel", "out-of-band"),
                        now,
                    )?;
                }
            }
            ActionOutcome::Refused { reason } => {
                let _ = self.audit.append_at(
                    self.action_event(
                        EventKind::ContextDenied,
                        reason.to_string(),
                        session_id,
                        &action,
                        user.as_deref(),
                    ),
                    now,
                );
            }
        }
        Ok(outcome)
    }

    fn action_event(
        &self,
        kind: EventKind,
        outcome: impl Into<String>,
        session_id: &str,
        action: &Action,
        user: Option<&str>,
    ) -> EventDraft {
        let mut draft = EventDraft::new(kind, outcome)
            .session(session_id)
            .domain(&action.domain)
            .detail("operation", &action.operation);
        if let Some(user) = user {
            draft = draft.user(user);
        }
        draft
    }

    /// Current view of an approval, with expiry evaluated lazily against
    /// `now` so a parked strong approval reads expired once its code dies.
    pub fn approval(&self, id: &str, now: DateTime<Utc>) -> Option<PendingApproval> {
        self.engine.read().approval(id).map(|a| {
            let mut snapshot = a.clone();
            snapshot.status = a.status_at(now);
            snapshot
        })
    }

    /// Admin-side read of a strong approval's one-time code. Never exposed
    /// on the agent surface.
    pub fn issued_otp(&self, approval_id: &str) -> Option<String> {
        self.engine
            .read()
            .issued_otp(approval_id)
            .map(str::to_owned)
    }

    /// Resolve a soft approval in-channel. An approval only counts once it
    /// is on the ledger; the approved action's execution is recorded in the
    /// same breath.
    pub fn resolve_soft(
        &self,
        approval_id: &str,
        approve: bool,
        now: DateTime<Utc>,
    ) -> Result<PendingApproval, PlaneError> {
        let approval = self.engine.write().resolve_soft(approval_id, approve)?;
        self.record_resolution(&approval, approve, "in-channel", now)?;
        Ok(approval)
    }

    /// Resolve a strong approval with its one-time code on the out-of-band
    /// channel. Security-relevant failures (wrong code, replay, wrong
    /// channel, expiry) are themselves recorded.
    pub fn resolve_strong(
        &self,
        approval_id: &str,
        code: &str,
        channel: Channel,
        now: DateTime<Utc>,
    ) -> Result<PendingApproval, PlaneError> {
        let result = self
            .engine
            .write()
            .resolve_strong(approval_id, code, channel, now);
        match result {
            Ok(approval) => {
                self.record_resolution(&approval, true, "out-of-band", now)?;
                Ok(approval)
            }
            Err(err) => {
                let note = match &err {
                    PermissionError::WrongOtp(_) => Some("wrong one-time code"),
                    PermissionError::Replay(_) => Some("replayed a consumed code"),
                    PermissionError::WrongChannel => Some("strong approval on the agent channel"),
                    PermissionError::Expired(_) => Some("code expired"),
                    _ => None,
                };
                if let Some(note) = note {
                    let _ = self.audit.append_at(
                        EventDraft::new(EventKind::ApprovalRejected, note)
                            .detail("approval_id", approval_id),
                        now,
                    );
                }
                Err(err.into())
            }
        }
    }

    fn record_resolution(
        &self,
        approval: &PendingApproval,
        approved: bool,
        channel: &str,
        now: DateTime<Utc>,
    ) -> Result<(), PlaneError> {
        let kind = if approved {
            EventKind::ApprovalResolved
        } else {
            EventKind::ApprovalRejected
        };
        let outcome = if approved { "approved" } else { "rejected" };
        self.audit.append_at(
            EventDraft::new(kind, outcome)
                .session(&approval.session_id)
                .user(&approval.user)
                .domain(&approval.domain)
                .detail("approval_id", &approval.id)
                .detail("operation", &approval.action.operation)
                .detail("channel", channel),
            now,
        )?;
        if approved {
            self.audit.append_at(
                EventDraft::new(EventKind::ActionExecuted, "executed")
                    .session(&approval.session_id)
                    .user(&approval.user)
                    .domain(&approval.domain)
                    .detail("approval_id", &approval.id)
                    .detail("operation", &approval.action.operation),
                now,
            )?;
        }
        Ok(())
    }

    // ---- reconciliation ---------------------------------------------------

    /// Run one reconcile cycle now, consuming any staged declaration
    /// changes, then refresh the router's known-entity set from the
    /// surviving corpus.
    pub fn reconcile_now(&self, now: DateTime<Utc>) -> CycleReport {
        let staged = std::mem::take(&mut *self.staged.lock());
        let vectorizer = self.vectorizer.read().clone();
        let mut links = self.links.lock();
        let report = self.reconciler.lock().reconcile_once(
            &self.registry,
            &mut links,
            &vectorizer,
            &self.audit,
            staged,
            now,
        );
        drop(links);
        self.sync_router_entities();
        report
    }

    /// Refit the shared embedding space over everything currently live and
    /// re-embed the corpus in place. Worth calling after large ingests;
    /// queries and content must share one space for similarity to mean
    /// anything.
    pub fn refit_vectors(&self) {
        let mut corpus = Vec::new();
        for domain in self.registry.list_domains() {
            if let Ok(units) = self.registry.annotated_live_units(&domain) {
                corpus.extend(
                    units
                        .into_iter()
                        // Conflicted slots hold two live versions; re-upserting
                        // the loser would mint spurious versions. They re-embed
                        // after resolution.
                        .filter(|a| a.freshness != FreshnessState::Conflicted)
                        .map(|a| a.unit),
                );
            }
        }
        let fitted = Vectorizer::fit(corpus.iter().map(|u| u.content.as_str()));
        for mut unit in corpus {
            unit.vector = fitted.embed(&unit.content);
            let _ = self.registry.upsert_unit(unit);
        }
        *self.vectorizer.write() = fitted;
    }

    fn sync_router_entities(&self) {
        let mut entities = BTreeSet::new();
        for domain in self.registry.list_domains() {
            if let Ok(units) = self.registry.annotated_live_units(&domain) {
                for annotated in units {
                    entities.extend(
                        annotated
                            .unit
                            .metadata
                            .entities
                            .iter()
                            .map(|e| e.to_lowercase()),
                    );
                }
            }
        }
        let mut router = self.router.write();
        if !router.entities().eq(entities.iter().map(String::as_str)) {
            router.set_entities(entities);
        }
    }

    pub fn source_states(&self, domain: &str) -> Result<Vec<SourceState>, PlaneError> {
        Ok(self.registry.source_states(domain)?)
    }

    /// Start the periodic reconcile loop on a background thread. The
    /// returned handle stops the loop when dropped.
    pub fn spawn_reconcile_loop(self: &Arc<Self>, interval: std::time::Duration) -> ReconcileHandle {
        let plane = Arc::clone(self);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                plane.reconcile_now(Utc::now());
                thread::park_timeout(interval);
            }
        });
        ReconcileHandle {
            stop,
            thread: Some(thread),
        }
    }
}

fn tier_str(tier: Tier) -> &'static str {
    match tier {
        Tier::Autonomous => "autonomous",
        Tier::SoftApproval => "soft-approval",
        Tier::StrongApproval => "strong-approval",
        Tier::Excluded => "excluded",
    }
}

/// Default cadence for [`ContextPlane::spawn_reconcile_loop`].
pub fn default_reconcile_interval() -> std::time::Duration {
    std::time::Duration::from_secs(DEFAULT_RECONCILE_INTERVAL_SECS)
}

/// Stops the background reconcile loop when dropped (or explicitly).
pub struct ReconcileHandle {
    stop: Arc<AtomicBool>,
    thread: Option<thread::JoinHandle<()>>,
}

impl ReconcileHandle {
    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(thread) = self.thread.take() {
            thread.thread().unpark();
            let _ = thread.join();
        }
    }
}

impl Drop for ReconcileHandle {
    fn drop(&mut self) {
        self.halt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taxonomy() -> Taxonomy {
        Taxonomy::from_json(r#"{"sales": ["client", "renewal"], "hr": ["benefits"]}"#).unwrap()
    }

    #[test]
    fn first_apply_registers_without_staging() {
        let plane = ContextPlane::new(taxonomy());
        let yaml = r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: sales
spec:
  sources:
    - name: records
      type: file-system
      config: {path: /srv/none}
      refresh: 1h
  access:
    roles:
      - role: rep
        read: ["*"]
"#;
        let applied = plane.apply_manifest(yaml).unwrap();
        assert!(applied.created);
        assert!(applied.changes.is_empty());
        assert!(plane.registry().has_domain("sales"));
        assert!(plane.staged.lock().is_empty());
    }

    #[test]
    fn reapply_stages_the_diff() {
        let plane = ContextPlane::new(taxonomy());
        let v1 = r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: sales
spec:
  sources:
    - name: records
      type: file-system
      config: {path: /srv/none}
      refresh: 1h
  access:
    roles:
      - role: rep
        read: ["*"]
"#;
        plane.apply_manifest(v1).unwrap();
        let v2 = v1.replace("read: [\"*\"]", "read: [\"a/*\"]");
        let applied = plane.apply_manifest(&v2).unwrap();
        assert!(!applied.created);
        assert_eq!(applied.changes, vec![ManifestChange::Access]);
        let staged = plane.staged.lock();
        assert_eq!(staged.len(), 1);
        assert_eq!(staged[0].domain, "sales");
        assert_eq!(staged[0].change, ManifestChange::Access);
    }

    #[test]
    fn bad_manifests_are_rejected_whole() {
        let plane = ContextPlane::new(taxonomy());
        let err = plane.apply_manifest("apiVersion: nope").unwrap_err();
        assert!(matches!(err, PlaneError::Manifest(_)));
        assert!(plane.registry().list_domains().is_empty());
    }
}
