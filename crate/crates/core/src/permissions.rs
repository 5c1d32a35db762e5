//! Action governance: risk tiers, role/profile registration, session
//! lifecycle, access checks, and the approval workflows (soft in-channel
//! confirmation, strong out-of-band OTP).
//!
//! Two invariants hold at all times:
//!
//! * an agent profile is a **strict** subset of the user role it is derived
//!   from — never more operations, never a laxer tier, never exactly equal;
//! * the engine **fails closed** — if it is marked unavailable, every access
//!   check denies and every action submission errors.
//!
//! One-time codes for strong approvals live only in the engine's admin-side
//! store. The [`PendingApproval`] records handed back to agent-facing callers
//! never carry the code, so no serialization bug can leak it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{AccessSpec, AgentPermissions};
use crate::registry::ContextUnit;
use crate::timefmt;

/// Risk tier for an agent-initiated action. Ordering is by escalation:
/// a higher tier always demands at least as much ceremony as a lower one.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    #[default]
    Autonomous,
    SoftApproval,
    StrongApproval,
    Excluded,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Autonomous => "autonomous",
            Tier::SoftApproval => "soft-approval",
            Tier::StrongApproval => "strong-approval",
            Tier::Excluded => "excluded",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How long a strong-approval one-time code stays valid.
pub const OTP_TTL_SECONDS: i64 = 300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PermissionError {
    #[error("permission engine unavailable; failing closed")]
    Unavailable,
    #[error("unknown user role {0:?}")]
    UnknownRole(String),
    #[error("user role {0:?} is already registered")]
    DuplicateRole(String),
    #[error("agent profile {0:?} is already registered")]
    DuplicateProfile(String),
    #[error("agent profile {profile:?} grants {operation:?}, which user role {role:?} does not hold")]
    SupersetViolation {
        profile: String,
        role: String,
        operation: String,
    },
    #[error("agent profile {profile:?} must be a strict subset of user role {role:?}, not all of it")]
    EqualSetViolation { profile: String, role: String },
    #[error(
        "agent profile {profile:?} relaxes {operation:?} below user role {role:?} \
         ({required} required, {granted} granted)"
    )]
    TierViolation {
        profile: String,
        role: String,
        operation: String,
        required: Tier,
        granted: Tier,
    },
    #[error("unknown agent profile {0:?}")]
    UnknownProfile(String),
    #[error("agent profile {profile:?} is derived from role {bound:?}, not {requested:?}")]
    ProfileRoleMismatch {
        profile: String,
        bound: String,
        requested: String,
    },
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} has been killed")]
    SessionKilled(String),
    #[error("approval {0:?} is not pending")]
    NotPending(String),
    #[error("approval {0:?} is not resolved at this tier")]
    WrongTier(String),
    #[error("wrong verification code for approval {0:?}")]
    WrongOtp(String),
    #[error("approval {0:?} expired before resolution")]
    Expired(String),
    #[error("verification code for approval {0:?} was already consumed")]
    Replay(String),
    #[error("strong approvals cannot be resolved over the agent channel")]
    WrongChannel,
}

/// Operation name → oversight tier. Used for both user roles and agent
/// profiles; absence of an operation means it is not held at all.
pub type OperationTiers = BTreeMap<String, Tier>;

/// What a human principal may do. The tier is the *minimum* ceremony any
/// delegate must observe for that operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRole {
    pub name: String,
    pub operations: OperationTiers,
}

/// The operations a user role delegates to its agents — always a strict
/// subset of the role, at tiers no laxer than the role's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: String,
    /// The user role this profile is derived from.
    pub user_role: String,
    pub operations: OperationTiers,
}

/// Per-session routing scope: which named entities `${assigned}` resolves to
/// for this principal, and the most recent entity mentioned (for pronoun
/// resolution on follow-up queries).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionScope {
    pub assigned: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_entity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub user: String,
    pub role: String,
    pub agent_profile: String,
    /// Home domain queries are routed from.
    pub domain: String,
    pub scope: SessionScope,
    #[serde(with = "timefmt")]
    pub created_at: DateTime<Utc>,
    /// Absorbing: once true it never flips back.
    pub killed: bool,
}

/// An agent-initiated side effect, held until its tier's ceremony completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// `"write"` for content writes (governed per path); anything else is an
    /// execute operation looked up in the domain's operation map.
    pub operation: String,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApprovalStatus {
    Pending,
    Approved,
    Rejected,
    Expired,
}

/// The agent-visible face of a held action. Never carries the one-time code;
/// that lives only in the engine's admin-side store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingApproval {
    pub id: String,
    pub session_id: String,
    pub user: String,
    pub domain: String,
    pub action: Action,
    pub tier: Tier,
    #[serde(with = "timefmt")]
    pub requested_at: DateTime<Utc>,
    pub status: ApprovalStatus,
}

impl PendingApproval {
    /// Status with lazy expiry applied: a strong approval still marked
    /// pending after the code's lifetime is effectively expired.
    pub fn status_at(&self, now: DateTime<Utc>) -> ApprovalStatus {
        if self.status == ApprovalStatus::Pending
            && self.tier == Tier::StrongApproval
            && now - self.requested_at > Duration::seconds(OTP_TTL_SECONDS)
        {
            ApprovalStatus::Expired
        } else {
            self.status
        }
    }
}

/// Result of submitting an action: executed now, held for approval, or
/// refused outright.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionOutcome {
    Executed { action_id: String },
    Pending(PendingApproval),
    Refused { reason: DenyReason },
}

/// Which side of the trust boundary a resolution request arrived on. The
/// service enforces this structurally (strong approvals only exist on the
/// admin listener); the engine checks again so the rule survives misuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Agent,
    OutOfBand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessDecision {
    Allow,
    Deny(DenyReason),
}

impl AccessDecision {
    pub fn is_allow(&self) -> bool {
        matches!(self, AccessDecision::Allow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenyReason {
    EngineUnavailable,
    UnknownSession,
    SessionKilled,
    RoleNotAuthorized,
    OutOfScope,
    OperationExcluded,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenyReason::EngineUnavailable => "permission engine unavailable",
            DenyReason::UnknownSession => "unknown session",
            DenyReason::SessionKilled => "session killed",
            DenyReason::RoleNotAuthorized => "role not authorized for unit",
            DenyReason::OutOfScope => "path outside the session's assigned scope",
            DenyReason::OperationExcluded => "operation excluded for this agent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KillScope {
    Session(String),
    User(String),
    Global,
}

/// The resolved tier for a specific action: the stricter of what the domain
/// demands and what the delegation allows. Unknown operations are excluded
/// on both sides.
pub fn classify_action(perms: &AgentPermissions, profile: &AgentProfile, action: &Action) -> Tier {
    let domain_tier = if action.operation == "write" {
        match &action.path {
            Some(path) => perms.write_tier(path),
            None => Tier::Excluded,
        }
    } else if action.operation == "read" {
        perms.read
    } else {
        perms
            .execute_tier(&action.operation)
            .unwrap_or(Tier::Excluded)
    };
    let delegated = profile
        .operations
        .get(&action.operation)
        .copied()
        .unwrap_or(Tier::Excluded);
    domain_tier.max(delegated)
}

#[derive(Debug)]
struct OtpIssue {
    code: String,
    issued_at: DateTime<Utc>,
    attempts: u32,
}

/// The governance engine: registered roles and profiles, live sessions, and
/// the approval ledger. Callers audit and execute; the engine only decides.
#[derive(Debug, Default)]
pub struct Engine {
    available: bool,
    roles: HashMap<String, UserRole>,
    profiles: HashMap<String, AgentProfile>,
    sessions: HashMap<String, Session>,
    approvals: HashMap<String, PendingApproval>,
    /// Admin-side only. Codes never appear in [`PendingApproval`].
    otps: HashMap<String, OtpIssue>,
    next_session: u64,
    next_approval: u64,
    next_action: u64,
}

impl Engine {
    pub fn new() -> Self {
        Engine {
            available: true,
            ..Engine::default()
        }
    }

    /// Simulate (or recover from) an engine outage. While unavailable, every
    /// decision fails closed.
    pub fn set_available(&mut self, available: bool) {
        self.available = available;
    }

    pub fn is_available(&self) -> bool {
        self.available
    }

    pub fn register_role(&mut self, role: UserRole) -> Result<(), PermissionError> {
        if self.roles.contains_key(&role.name) {
            return Err(PermissionError::DuplicateRole(role.name));
        }
        self.roles.insert(role.name.clone(), role);
        Ok(())
    }

    pub fn role(&self, name: &str) -> Option<&UserRole> {
        self.roles.get(name)
    }

    /// Register a delegation. Rejected atomically unless the profile is a
    /// strict subset of its user role at tiers no laxer than the role's.
    pub fn register_profile(&mut self, profile: AgentProfile) -> Result<(), PermissionError> {
        if self.profiles.contains_key(&profile.name) {
            return Err(PermissionError::DuplicateProfile(profile.name));
        }
        let role = self
            .roles
            .get(&profile.user_role)
            .ok_or_else(|| PermissionError::UnknownRole(profile.user_role.clone()))?;
        for (operation, &granted) in &profile.operations {
            match role.operations.get(operation) {
                None => {
                    return Err(PermissionError::SupersetViolation {
                        profile: profile.name,
                        role: role.name.clone(),
                        operation: operation.clone(),
                    })
                }
                Some(&required) if granted < required => {
                    return Err(PermissionError::TierViolation {
                        profile: profile.name,
                        role: role.name.clone(),
                        operation: operation.clone(),
                        required,
                        granted,
                    })
                }
                Some(_) => {}
            }
        }
        if profile.operations.len() == role.operations.len() {
            return Err(PermissionError::EqualSetViolation {
                profile: profile.name,
                role: role.name.clone(),
            });
        }
        self.profiles.insert(profile.name.clone(), profile);
        Ok(())
    }

    pub fn profile(&self, name: &str) -> Option<&AgentProfile> {
        self.profiles.get(name)
    }

    pub fn create_session(
        &mut self,
        user: &str,
        role: &str,
        agent_profile: &str,
        domain: &str,
        assigned: Vec<String>,
        now: DateTime<Utc>,
    ) -> Result<Session, PermissionError> {
        if !self.available {
            return Err(PermissionError::Unavailable);
        }
        if !self.roles.contains_key(role) {
            return Err(PermissionError::UnknownRole(role.to_owned()));
        }
        let profile = self
            .profiles
            .get(agent_profile)
            .ok_or_else(|| PermissionError::UnknownProfile(agent_profile.to_owned()))?;
        if profile.user_role != role {
            return Err(PermissionError::ProfileRoleMismatch {
                profile: agent_profile.to_owned(),
                bound: profile.user_role.clone(),
                requested: role.to_owned(),
            });
        }
        self.next_session += 1;
        let session = Session {
            id: format!("sess-{}", self.next_session),
            user: user.to_owned(),
            role: role.to_owned(),
            agent_profile: agent_profile.to_owned(),
            domain: domain.to_owned(),
            scope: SessionScope {
                assigned,
                last_entity: None,
            },
            created_at: now,
            killed: false,
        };
        self.sessions.insert(session.id.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    /// Record the most recent concrete entity a session asked about, so
    /// follow-up pronouns can resolve to it.
    pub fn note_entity(&mut self, session_id: &str, entity: &str) {
        if let Some(session) = self.sessions.get_mut(session_id) {
            session.scope.last_entity = Some(entity.to_owned());
        }
    }

    /// Kill sessions in scope. Their pending approvals are rejected and any
    /// outstanding codes dropped. Returns how many sessions were newly
    /// killed; killing is absorbing, so repeats count zero.
    pub fn kill(&mut self, scope: &KillScope) -> usize {
        let mut killed = 0;
        for session in self.sessions.values_mut() {
            let hit = match scope {
                KillScope::Session(id) => &session.id == id,
                KillScope::User(user) => &session.user == user,
                KillScope::Global => true,
            };
            if hit && !session.killed {
                session.killed = true;
                killed += 1;
            }
        }
        let dead: Vec<String> = self
            .approvals
            .values()
            .filter(|a| {
                a.status == ApprovalStatus::Pending
                    && self.sessions.get(&a.session_id).is_none_or(|s| s.killed)
            })
            .map(|a| a.id.clone())
            .collect();
        for id in dead {
            if let Some(approval) = self.approvals.get_mut(&id) {
                approval.status = ApprovalStatus::Rejected;
            }
            self.otps.remove(&id);
        }
        killed
    }

    /// May `session` see `unit`? Deny unless the engine is up, the session is
    /// live, the unit lists the session's role, and the domain's rule for
    /// that role covers the unit's path under the session's assignments.
    pub fn check_access(
        &self,
        session_id: &str,
        access: &AccessSpec,
        unit: &ContextUnit,
    ) -> AccessDecision {
        if !self.available {
            return AccessDecision::Deny(DenyReason::EngineUnavailable);
        }
        let Some(session) = self.sessions.get(session_id) else {
            return AccessDecision::Deny(DenyReason::UnknownSession);
        };
        if session.killed {
            return AccessDecision::Deny(DenyReason::SessionKilled);
        }
        if !unit.authorized_roles.contains(&session.role) {
            return AccessDecision::Deny(DenyReason::RoleNotAuthorized);
        }
        let Some(rule) = access.role(&session.role) else {
            return AccessDecision::Deny(DenyReason::RoleNotAuthorized);
        };
        if !rule.can_read(&unit.metadata.path, &session.scope.assigned) {
            return AccessDecision::Deny(DenyReason::OutOfScope);
        }
        AccessDecision::Allow
    }

    /// Submit an action for execution under the domain's permission map.
    /// Autonomous actions are cleared immediately (the caller executes and
    /// audits); approval tiers park the action; excluded operations and dead
    /// sessions are refused.
    pub fn submit_action(
        &mut self,
        session_id: &str,
        perms: &AgentPermissions,
        action: Action,
        now: DateTime<Utc>,
    ) -> Result<ActionOutcome, PermissionError> {
        if !self.available {
            return Err(PermissionError::Unavailable);
        }
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| PermissionError::UnknownSession(session_id.to_owned()))?;
        if session.killed {
            return Ok(ActionOutcome::Refused {
                reason: DenyReason::SessionKilled,
            });
        }
        let profile = self
            .profiles
            .get(&session.agent_profile)
            .ok_or_else(|| PermissionError::UnknownProfile(session.agent_profile.clone()))?;
        let tier = classify_action(perms, profile, &action);
        match tier {
            Tier::Excluded => Ok(ActionOutcome::Refused {
                reason: DenyReason::OperationExcluded,
            }),
            Tier::Autonomous => {
                self.next_action += 1;
                Ok(ActionOutcome::Executed {
                    action_id: format!("act-{}", self.next_action),
                })
            }
            Tier::SoftApproval | Tier::StrongApproval => {
                self.next_approval += 1;
                let id = format!("apr-{}", self.next_approval);
                if tier == Tier::StrongApproval {
                    let code = format!("{:06}", rand::thread_rng().gen_range(0..1_000_000));
                    self.otps.insert(
                        id.clone(),
                        OtpIssue {
                            code,
                            issued_at: now,
                            attempts: 0,
                        },
                    );
                }
                let approval = PendingApproval {
                    id: id.clone(),
                    session_id: session.id.clone(),
                    user: session.user.clone(),
                    domain: action.domain.clone(),
                    action,
                    tier,
                    requested_at: now,
                    status: ApprovalStatus::Pending,
                };
                self.approvals.insert(id, approval.clone());
                Ok(ActionOutcome::Pending(approval))
            }
        }
    }

    pub fn approval(&self, id: &str) -> Option<&PendingApproval> {
        self.approvals.get(id)
    }

    /// Admin-side read of the code issued for a strong approval. Exposed to
    /// the out-of-band channel only; never to agents.
    pub fn issued_otp(&self, approval_id: &str) -> Option<&str> {
        self.otps.get(approval_id).map(|i| i.code.as_str())
    }

    /// How many wrong codes have been tried against a strong approval.
    pub fn otp_attempts(&self, approval_id: &str) -> u32 {
        self.otps.get(approval_id).map_or(0, |i| i.attempts)
    }

    /// Resolve a soft approval in-channel. Approving returns the action for
    /// the caller to execute exactly once; any later resolution attempt sees
    /// `NotPending`.
    pub fn resolve_soft(
        &mut self,
        approval_id: &str,
        approve: bool,
    ) -> Result<PendingApproval, PermissionError> {
        if !self.available {
            return Err(PermissionError::Unavailable);
        }
        let approval = self
            .approvals
            .get(approval_id)
            .ok_or_else(|| PermissionError::NotPending(approval_id.to_owned()))?;
        if approval.tier != Tier::SoftApproval {
            return Err(PermissionError::WrongTier(approval_id.to_owned()));
        }
        if approval.status != ApprovalStatus::Pending {
            return Err(PermissionError::NotPending(approval_id.to_owned()));
        }
        if self.sessions.get(&approval.session_id).is_none_or(|s| s.killed) {
            return Err(PermissionError::SessionKilled(approval.session_id.clone()));
        }
        let status = if approve {
            ApprovalStatus::Approved
        } else {
            ApprovalStatus::Rejected
        };
        let approval = self.approvals.get_mut(approval_id).expect("checked above");
        approval.status = status;
        Ok(approval.clone())
    }

    /// Resolve a strong approval with its one-time code, out of band. A
    /// wrong code leaves the approval pending and counts the attempt; a
    /// consumed code can never approve again; codes die after
    /// [`OTP_TTL_SECONDS`].
    pub fn resolve_strong(
        &mut self,
        approval_id: &str,
        code: &str,
        channel: Channel,
        now: DateTime<Utc>,
    ) -> Result<PendingApproval, PermissionError> {
        if !self.available {
            return Err(PermissionError::Unavailable);
        }
        if channel == Channel::Agent {
            return Err(PermissionError::WrongChannel);
        }
        let approval = self
            .approvals
            .get(approval_id)
            .ok_or_else(|| PermissionError::NotPending(approval_id.to_owned()))?;
        if approval.tier != Tier::StrongApproval {
            return Err(PermissionError::WrongTier(approval_id.to_owned()));
        }
        match approval.status {
            ApprovalStatus::Pending => {}
            ApprovalStatus::Approved => {
                return Err(PermissionError::Replay(approval_id.to_owned()))
            }
            ApprovalStatus::Rejected | ApprovalStatus::Expired => {
                return Err(PermissionError::NotPending(approval_id.to_owned()))
            }
        }
        if self.sessions.get(&approval.session_id).is_none_or(|s| s.killed) {
            return Err(PermissionError::SessionKilled(approval.session_id.clone()));
        }
        let issue = self
            .otps
            .get_mut(approval_id)
            .ok_or_else(|| PermissionError::NotPending(approval_id.to_owned()))?;
        if now - issue.issued_at > Duration::seconds(OTP_TTL_SECONDS) {
            self.otps.remove(approval_id);
            let approval = self.approvals.get_mut(approval_id).expect("checked above");
            approval.status = ApprovalStatus::Expired;
            return Err(PermissionError::Expired(approval_id.to_owned()));
        }
        if issue.code != code {
            issue.attempts += 1;
            return Err(PermissionError::WrongOtp(approval_id.to_owned()));
        }
        self.otps.remove(approval_id);
        let approval = self.approvals.get_mut(approval_id).expect("checked above");
        approval.status = ApprovalStatus::Approved;
        Ok(approval.clone())
    }
}

#[cfg(test)]
mod tier_tests {
    use super::Tier;

    #[test]
    fn escalation_order() {
        assert!(Tier::Autonomous < Tier::SoftApproval);
        assert!(Tier::SoftApproval < Tier::StrongApproval);
        assert!(Tier::StrongApproval < Tier::Excluded);
    }

    #[test]
    fn serde_names_are_kebab_case() {
        for (tier, name) in [
            (Tier::Autonomous, "autonomous"),
            (Tier::SoftApproval, "soft-approval"),
            (Tier::StrongApproval, "strong-approval"),
            (Tier::Excluded, "excluded"),
        ] {
            assert_eq!(serde_json::to_string(&tier).unwrap(), format!("\"{name}\""));
            let back: Tier = serde_json::from_str(&format!("\"{name}\"")).unwrap();
            assert_eq!(back, tier);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::parse_manifest;
    use crate::registry::{Sensitivity, UnitMetadata, UnitType};
    use chrono::TimeZone;
    use std::collections::BTreeSet;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 5, 1, 12, 0, 0).unwrap()
    }

    fn sales_role() -> UserRole {
        UserRole {
            name: "sales-rep".to_owned(),
            operations: BTreeMap::from([
                ("read".to_owned(), Tier::Autonomous),
                ("write".to_owned(), Tier::Autonomous),
                ("send-external-email".to_owned(), Tier::Autonomous),
                ("update-client-record".to_owned(), Tier::Autonomous),
                ("sign-contract".to_owned(), Tier::StrongApproval),
            ]),
        }
    }

    fn sales_profile() -> AgentProfile {
        AgentProfile {
            name: "sales-agent".to_owned(),
            user_role: "sales-rep".to_owned(),
            operations: BTreeMap::from([
                ("read".to_owned(), Tier::Autonomous),
                ("write".to_owned(), Tier::SoftApproval),
                ("send-external-email".to_owned(), Tier::SoftApproval),
                ("update-client-record".to_owned(), Tier::SoftApproval),
            ]),
        }
    }

    fn engine_with_session() -> (Engine, Session) {
        let mut engine = Engine::new();
        engine.register_role(sales_role()).unwrap();
        engine.register_profile(sales_profile()).unwrap();
        let session = engine
            .create_session(
                "carol",
                "sales-rep",
                "sales-agent",
                "sales",
                vec!["henderson".to_owned()],
                t0(),
            )
            .unwrap();
        (engine, session)
    }

    fn access_spec() -> AccessSpec {
        parse_manifest(
            r#"
apiVersion: context/v1
kind: ContextDomain
metadata: {name: sales}
spec:
  sources:
    - {name: records, type: file-system, config: {path: /tmp}, refresh: 1h}
  access:
    roles:
      - {role: sales-rep, read: ["clients/${assigned}/*"], write: ["clients/${assigned}/*"]}
      - {role: sales-manager, read: ["*"]}
    agentPermissions:
      read: autonomous
      write:
        default: soft-approval
        paths:
          "*/contracts/*": strong-approval
      execute:
        send-external-email: soft-approval
        update-client-record: autonomous
        sign-contract: excluded
"#,
        )
        .unwrap()
        .access()
        .clone()
    }

    fn unit(path: &str, roles: &[&str]) -> ContextUnit {
        ContextUnit {
            id: format!("sales:records:{path}"),
            content: "body".to_owned(),
            unit_type: UnitType::Unstructured,
            metadata: UnitMetadata {
                author: "a".to_owned(),
                timestamp: t0(),
                domain: "sales".to_owned(),
                sensitivity: Sensitivity::Internal,
                entities: Vec::new(),
                source: "records".to_owned(),
                path: path.to_owned(),
                authority: 0.5,
            },
            version: 1,
            vector: Vec::new(),
            authorized_roles: roles.iter().map(|r| r.to_string()).collect::<BTreeSet<_>>(),
        }
    }

    #[test]
    fn profile_must_be_strict_subset_at_stricter_tiers() {
        let mut engine = Engine::new();
        engine.register_role(sales_role()).unwrap();

        // Operation the role does not hold.
        let mut bad = sales_profile();
        bad.operations
            .insert("delete-domain".to_owned(), Tier::StrongApproval);
        assert!(matches!(
            engine.register_profile(bad),
            Err(PermissionError::SupersetViolation { operation, .. }) if operation == "delete-domain"
        ));

        // Laxer tier than the role demands.
        let mut bad = sales_profile();
        bad.operations
            .insert("sign-contract".to_owned(), Tier::SoftApproval);
        assert!(matches!(
            engine.register_profile(bad),
            Err(PermissionError::TierViolation { operation, required, granted, .. })
                if operation == "sign-contract"
                    && required == Tier::StrongApproval
                    && granted == Tier::SoftApproval
        ));

        // Exactly the role's set, even at stricter tiers, is refused.
        let mut bad = sales_profile();
        bad.operations
            .insert("sign-contract".to_owned(), Tier::StrongApproval);
        assert!(matches!(
            engine.register_profile(bad),
            Err(PermissionError::EqualSetViolation { .. })
        ));

        // None of the rejections left partial state behind.
        assert!(engine.profile("sales-agent").is_none());
        engine.register_profile(sales_profile()).unwrap();
        assert!(engine.profile("sales-agent").is_some());
    }

    #[test]
    fn registration_rejects_duplicates_and_unknown_roles() {
        let mut engine = Engine::new();
        engine.register_role(sales_role()).unwrap();
        assert!(matches!(
            engine.register_role(sales_role()),
            Err(PermissionError::DuplicateRole(_))
        ));
        let mut orphan = sales_profile();
        orphan.user_role = "nobody".to_owned();
        assert!(matches!(
            engine.register_profile(orphan),
            Err(PermissionError::UnknownRole(_))
        ));
        engine.register_profile(sales_profile()).unwrap();
        assert!(matches!(
            engine.register_profile(sales_profile()),
            Err(PermissionError::DuplicateProfile(_))
        ));
    }

    #[test]
    fn session_requires_matching_role_and_profile() {
        let mut engine = Engine::new();
        engine.register_role(sales_role()).unwrap();
        engine
            .register_role(UserRole {
                name: "sales-manager".to_owned(),
                operations: BTreeMap::from([("read".to_owned(), Tier::Autonomous)]),
            })
            .unwrap();
        engine.register_profile(sales_profile()).unwrap();
        let err = engine
            .create_session("bob", "sales-manager", "sales-agent", "sales", vec![], t0())
            .unwrap_err();
        assert!(matches!(err, PermissionError::ProfileRoleMismatch { .. }));
    }

    #[test]
    fn access_requires_role_and_scope() {
        let (engine, session) = engine_with_session();
        let access = access_spec();

        // In scope: carol is assigned henderson.
        let allowed = unit("clients/henderson/profile.md", &["sales-rep", "sales-manager"]);
        assert_eq!(
            engine.check_access(&session.id, &access, &allowed),
            AccessDecision::Allow
        );

        // Same role, different client: scope mismatch.
        let other = unit("clients/meridian/profile.md", &["sales-rep", "sales-manager"]);
        assert_eq!(
            engine.check_access(&session.id, &access, &other),
            AccessDecision::Deny(DenyReason::OutOfScope)
        );

        // Unit does not list the session's role at all.
        let managers_only = unit("pipeline/q3.md", &["sales-manager"]);
        assert_eq!(
            engine.check_access(&session.id, &access, &managers_only),
            AccessDecision::Deny(DenyReason::RoleNotAuthorized)
        );

        // Unknown session.
        assert_eq!(
            engine.check_access("sess-999", &access, &allowed),
            AccessDecision::Deny(DenyReason::UnknownSession)
        );
    }

    #[test]
    fn engine_outage_fails_closed() {
        let (mut engine, session) = engine_with_session();
        let access = access_spec();
        let allowed = unit("clients/henderson/profile.md", &["sales-rep"]);
        engine.set_available(false);
        assert_eq!(
            engine.check_access(&session.id, &access, &allowed),
            AccessDecision::Deny(DenyReason::EngineUnavailable)
        );
        let action = Action {
            operation: "update-client-record".to_owned(),
            domain: "sales".to_owned(),
            path: None,
            body: String::new(),
        };
        assert!(matches!(
            engine.submit_action(&session.id, &access_spec().agent_permissions, action, t0()),
            Err(PermissionError::Unavailable)
        ));
        engine.set_available(true);
        assert!(engine
            .check_access(&session.id, &access, &allowed)
            .is_allow());
    }

    #[test]
    fn kill_is_absorbing_and_scoped() {
        let (mut engine, carol) = engine_with_session();
        let dave = engine
            .create_session(
                "dave",
                "sales-rep",
                "sales-agent",
                "sales",
                vec!["meridian".to_owned()],
                t0(),
            )
            .unwrap();

        assert_eq!(engine.kill(&KillScope::Session(carol.id.clone())), 1);
        assert_eq!(engine.kill(&KillScope::Session(carol.id.clone())), 0);
        assert!(engine.session(&carol.id).unwrap().killed);
        assert!(!engine.session(&dave.id).unwrap().killed);

        let access = access_spec();
        let u = unit("clients/henderson/profile.md", &["sales-rep"]);
        assert_eq!(
            engine.check_access(&carol.id, &access, &u),
            AccessDecision::Deny(DenyReason::SessionKilled)
        );

        assert_eq!(engine.kill(&KillScope::Global), 1); // only dave was live
        assert!(engine.session(&dave.id).unwrap().killed);
    }

    #[test]
    fn classification_uses_path_tiers_and_delegation_floor() {
        let perms = access_spec().agent_permissions;
        let profile = sales_profile();
        let classify = |operation: &str, path: Option<&str>| {
            classify_action(
                &perms,
                &profile,
                &Action {
                    operation: operation.to_owned(),
                    domain: "sales".to_owned(),
                    path: path.map(str::to_owned),
                    body: String::new(),
                },
            )
        };

        // Contract paths escalate over the default write tier.
        assert_eq!(classify("write", Some("clients/acme/contracts/msa.md")), Tier::StrongApproval);
        assert_eq!(classify("write", Some("clients/acme/notes.md")), Tier::SoftApproval);
        // Domain says autonomous, but the delegation floor is soft approval.
        assert_eq!(classify("update-client-record", None), Tier::SoftApproval);
        // Unknown operations are excluded, not defaulted.
        assert_eq!(classify("provision-server", None), Tier::Excluded);
        // Excluded in the domain map wins regardless of delegation.
        assert_eq!(classify("sign-contract", None), Tier::Excluded);
    }

    #[test]
    fn soft_approval_executes_exactly_once() {
        let (mut engine, session) = engine_with_session();
        let perms = access_spec().agent_permissions;
        let action = Action {
            operation: "send-external-email".to_owned(),
            domain: "sales".to_owned(),
            path: None,
            body: "draft".to_owned(),
        };
        let outcome = engine
            .submit_action(&session.id, &perms, action.clone(), t0())
            .unwrap();
        let ActionOutcome::Pending(approval) = outcome else {
            panic!("expected pending, got {outcome:?}");
        };
        assert_eq!(approval.tier, Tier::SoftApproval);
        assert_eq!(approval.status, ApprovalStatus::Pending);

        let resolved = engine.resolve_soft(&approval.id, true).unwrap();
        assert_eq!(resolved.status, ApprovalStatus::Approved);
        assert_eq!(resolved.action, action);

        assert!(matches!(
            engine.resolve_soft(&approval.id, true),
            Err(PermissionError::NotPending(_))
        ));
    }

    #[test]
    fn soft_rejection_sticks() {
        let (mut engine, session) = engine_with_session();
        let perms = access_spec().agent_permissions;
        let action = Action {
            operation: "send-external-email".to_owned(),
            domain: "sales".to_owned(),
            path: None,
            body: String::new(),
        };
        let ActionOutcome::Pending(approval) =
            engine.submit_action(&session.id, &perms, action, t0()).unwrap()
        else {
            panic!("expected pending");
        };
        let resolved = engine.resolve_soft(&approval.id, false).unwrap();
        assert_eq!(resolved.status, ApprovalStatus::Rejected);
        assert!(matches!(
            engine.resolve_soft(&approval.id, true),
            Err(PermissionError::NotPending(_))
        ));
    }

    #[test]
    fn strong_approval_demands_the_code_out_of_band() {
        let (mut engine, session) = engine_with_session();
        let perms = access_spec().agent_permissions;
        let action = Action {
            operation: "write".to_owned(),
            domain: "sales".to_owned(),
            path: Some("clients/henderson/contracts/msa.md".to_owned()),
            body: "v2".to_owned(),
        };
        let ActionOutcome::Pending(approval) =
            engine.submit_action(&session.id, &perms, action, t0()).unwrap()
        else {
            panic!("expected pending");
        };
        assert_eq!(approval.tier, Tier::StrongApproval);

        // The code exists only on the admin side.
        let code = engine.issued_otp(&approval.id).unwrap().to_owned();
        assert_eq!(code.len(), 6);
        assert!(code.bytes().all(|b| b.is_ascii_digit()));
        let serialized = serde_json::to_string(&approval).unwrap();
        assert!(
            !serialized.contains(&code),
            "agent-visible approval must not carry the code"
        );

        // Soft resolution path refuses strong approvals.
        assert!(matches!(
            engine.resolve_soft(&approval.id, true),
            Err(PermissionError::WrongTier(_))
        ));
        // The agent channel cannot resolve them either, even with the code.
        assert!(matches!(
            engine.resolve_strong(&approval.id, &code, Channel::Agent, t0()),
            Err(PermissionError::WrongChannel)
        ));

        // Wrong code: still pending, attempt counted.
        let wrong = if code == "000000" { "000001" } else { "000000" };
        assert!(matches!(
            engine.resolve_strong(&approval.id, wrong, Channel::OutOfBand, t0()),
            Err(PermissionError::WrongOtp(_))
        ));
        assert_eq!(engine.otp_attempts(&approval.id), 1);
        assert_eq!(
            engine.approval(&approval.id).unwrap().status,
            ApprovalStatus::Pending
        );

        // Right code out of band: approved, code consumed.
        let resolved = engine
            .resolve_strong(&approval.id, &code, Channel::OutOfBand, t0())
            .unwrap();
        assert_eq!(resolved.status, ApprovalStatus::Approved);
        assert!(engine.issued_otp(&approval.id).is_none());

        // Replaying the consumed code can never approve again.
        assert!(matches!(
            engine.resolve_strong(&approval.id, &code, Channel::OutOfBand, t0()),
            Err(PermissionError::Replay(_))
        ));
    }

    #[test]
    fn strong_approval_codes_expire() {
        let (mut engine, session) = engine_with_session();
        let perms = access_spec().agent_permissions;
        let action = Action {
            operation: "write".to_owned(),
            domain: "sales".to_owned(),
            path: Some("clients/henderson/contracts/msa.md".to_owned()),
            body: String::new(),
        };
        let ActionOutcome::Pending(approval) =
            engine.submit_action(&session.id, &perms, action, t0()).unwrap()
        else {
            panic!("expected pending");
        };
        let code = engine.issued_otp(&approval.id).unwrap().to_owned();

        let late = t0() + Duration::seconds(OTP_TTL_SECONDS + 1);
        assert_eq!(approval.status_at(late), ApprovalStatus::Expired);
        assert!(matches!(
            engine.resolve_strong(&approval.id, &code, Channel::OutOfBand, late),
            Err(PermissionError::Expired(_))
        ));
        assert_eq!(
            engine.approval(&approval.id).unwrap().status,
            ApprovalStatus::Expired
        );
        // Within the lifetime it would still have been pending.
        assert_eq!(approval.status_at(t0()), ApprovalStatus::Pending);
    }

    #[test]
    fn killed_sessions_cannot_act_or_be_approved() {
        let (mut engine, session) = engine_with_session();
        let perms = access_spec().agent_permissions;
        let action = Action {
            operation: "send-external-email".to_owned(),
            domain: "sales".to_owned(),
            path: None,
            body: String::new(),
        };
        let ActionOutcome::Pending(approval) = engine
            .submit_action(&session.id, &perms, action.clone(), t0())
            .unwrap()
        else {
            panic!("expected pending");
        };

        assert_eq!(engine.kill(&KillScope::User("carol".to_owned())), 1);
        // The in-flight approval was rejected by the kill.
        assert_eq!(
            engine.approval(&approval.id).unwrap().status,
            ApprovalStatus::Rejected
        );
        assert!(matches!(
            engine.resolve_soft(&approval.id, true),
            Err(PermissionError::NotPending(_))
        ));
        // New submissions from the killed session are refused.
        let outcome = engine.submit_action(&session.id, &perms, action, t0()).unwrap();
        assert_eq!(
            outcome,
            ActionOutcome::Refused {
                reason: DenyReason::SessionKilled
            }
        );
    }

    #[test]
    fn unknown_operations_are_refused() {
        let (mut engine, session) = engine_with_session();
        let perms = access_spec().agent_permissions;
        let action = Action {
            operation: "transfer-funds".to_owned(),
            domain: "sales".to_owned(),
            path: None,
            body: String::new(),
        };
        let outcome = engine.submit_action(&session.id, &perms, action, t0()).unwrap();
        assert_eq!(
            outcome,
            ActionOutcome::Refused {
                reason: DenyReason::OperationExcluded
            }
        );
    }

    #[test]
    fn autonomous_actions_execute_immediately() {
        let (mut engine, session) = engine_with_session();
        // A manager profile without the soft-approval delegation floor.
        engine
            .register_role(UserRole {
                name: "sales-manager".to_owned(),
                operations: BTreeMap::from([
                    ("read".to_owned(), Tier::Autonomous),
                    ("update-client-record".to_owned(), Tier::Autonomous),
                ]),
            })
            .unwrap();
        engine
            .register_profile(AgentProfile {
                name: "manager-agent".to_owned(),
                user_role: "sales-manager".to_owned(),
                operations: BTreeMap::from([(
                    "update-client-record".to_owned(),
                    Tier::Autonomous,
                )]),
            })
            .unwrap();
        let manager = engine
            .create_session("bob", "sales-manager", "manager-agent", "sales", vec![], t0())
            .unwrap();
        let perms = access_spec().agent_permissions;
        let action = Action {
            operation: "update-client-record".to_owned(),
            domain: "sales".to_owned(),
            path: None,
            body: String::new(),
        };
        let outcome = engine.submit_action(&manager.id, &perms, action, t0()).unwrap();
        assert!(matches!(outcome, ActionOutcome::Executed { .. }));
        // The rep agent's delegation floor turns the same operation into a
        // soft approval.
        let action = Action {
            operation: "update-client-record".to_owned(),
            domain: "sales".to_owned(),
            path: None,
            body: String::new(),
        };
        let outcome = engine.submit_action(&session.id, &perms, action, t0()).unwrap();
        assert!(matches!(outcome, ActionOutcome::Pending(_)));
    }

    #[test]
    fn pronoun_scope_tracks_last_entity() {
        let (mut engine, session) = engine_with_session();
        assert_eq!(engine.session(&session.id).unwrap().scope.last_entity, None);
        engine.note_entity(&session.id, "henderson");
        assert_eq!(
            engine.session(&session.id).unwrap().scope.last_entity.as_deref(),
            Some("henderson")
        );
    }
}
