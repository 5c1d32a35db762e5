//! Append-only audit log.
//!
//! Every governed decision — access checks, deliveries, denials, action
//! submissions, approvals, kill switches, reconciliation deltas — lands here
//! with attribution, timestamp, and outcome. The log is write-ahead for
//! guarded operations: if an event cannot be appended, the operation it
//! records must fail closed, so callers treat [`AuditError`] as a denial.
//!
//! Backends: always in-memory; optionally a JSONL file (one event per line,
//! keys in fixed order, instants RFC 3339 UTC with microsecond precision) and
//! a stdout mirror for CLI debugging. Events are never mutated or deleted.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timefmt;

#[derive(Debug, Error)]
pub enum AuditError {
    /// The backend rejected the append; the guarded operation must fail closed.
    #[error("audit backend unavailable: {0}")]
    Backend(String),
    /// `otp_issued` events may reference the approval, never the code.
    #[error("otp_issued event must not carry an OTP-shaped value (detail key {0:?})")]
    OtpInDetail(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated,
    SessionKilled,
    ContextRequested,
    ContextDelivered,
    ContextDenied,
    ActionSubmitted,
    ActionExecuted,
    ApprovalRequested,
    ApprovalResolved,
    ApprovalRejected,
    OtpIssued,
    ReconcileDelta,
    SourceStateChange,
}

/// A recorded event. `seq` is gapless from 1 within one log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    #[serde(with = "timefmt")]
    pub at: DateTime<Utc>,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
}

/// An event under construction: everything except `seq` and `at`, which the
/// log assigns at append time.
#[derive(Debug, Clone)]
pub struct EventDraft {
    kind: EventKind,
    session_id: Option<String>,
    user: Option<String>,
    agent_id: Option<String>,
    domain: Option<String>,
    outcome: String,
    detail: BTreeMap<String, String>,
}

impl EventDraft {
    pub fn new(kind: EventKind, outcome: impl Into<String>) -> Self {
        EventDraft {
            kind,
            session_id: None,
            user: None,
            agent_id: None,
            domain: None,
            outcome: outcome.into(),
            detail: BTreeMap::new(),
        }
    }

    pub fn session(mut self, id: impl Into<String>) -> Self {
        self.session_id = Some(id.into());
        self
    }

    pub fn user(mut self, user: impl Into<String>) -> Self {
        self.user = Some(user.into());
        self
    }

    pub fn agent(mut self, agent_id: impl Into<String>) -> Self {
        self.agent_id = Some(agent_id.into());
        self
    }

    pub fn domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }

    pub fn detail(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.detail.insert(key.into(), value.into());
        self
    }

    fn validate(&self) -> Result<(), AuditError> {
        if self.kind == EventKind::OtpIssued {
            for (key, value) in &self.detail {
                let otp_shaped = value.len() == 6 && value.bytes().all(|b| b.is_ascii_digit());
                if otp_shaped {
                    return Err(AuditError::OtpInDetail(key.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone)]
pub struct AuditFilter {
    pub session: Option<String>,
    pub user: Option<String>,
    pub kind: Option<EventKind>,
    pub from: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
}

impl AuditFilter {
    fn matches(&self, event: &AuditEvent) -> bool {
        if let Some(s) = &self.session {
            if event.session_id.as_deref() != Some(s.as_str()) {
                return false;
            }
        }
        if let Some(u) = &self.user {
            if event.user.as_deref() != Some(u.as_str()) {
                return false;
            }
        }
        if let Some(k) = self.kind {
            if event.kind != k {
                return false;
            }
        }
        if let Some(from) = self.from {
            if event.at < from {
                return false;
            }
        }
        if let Some(until) = self.until {
            if event.at > until {
                return false;
            }
        }
        true
    }
}

struct Inner {
    events: Vec<AuditEvent>,
    file: Option<File>,
    mirror_stdout: bool,
    fail_injected: bool,
}

/// Linearizable append-only log; safe to share across threads.
pub struct AuditLog {
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog {
            inner: Mutex::new(Inner {
                events: Vec::new(),
                file: None,
                mirror_stdout: false,
                fail_injected: false,
            }),
        }
    }

    /// In-memory log that also appends one JSON line per event to `path`.
    pub fn with_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            inner: Mutex::new(Inner {
                events: Vec::new(),
                file: Some(file),
                mirror_stdout: false,
                fail_injected: false,
            }),
        })
    }

    pub fn set_stdout_mirror(&self, on: bool) {
        self.inner.lock().mirror_stdout = on;
    }

    /// Test hook: force subsequent appends to fail so callers' fail-closed
    /// coupling can be exercised.
    pub fn inject_failure(&self, on: bool) {
        self.inner.lock().fail_injected = on;
    }

    /// Append with the current wall clock.
    pub fn append(&self, draft: EventDraft) -> Result<u64, AuditError> {
        self.append_at(draft, Utc::now())
    }

    /// Append with a caller-supplied instant (experiments run on anchored
    /// clocks; the event stream must agree with them).
    pub fn append_at(&self, draft: EventDraft, at: DateTime<Utc>) -> Result<u64, AuditError> {
        draft.validate()?;
        let mut inner = self.inner.lock();
        if inner.fail_injected {
            return Err(AuditError::Backend("injected failure".into()));
        }
        let seq = inner.events.len() as u64 + 1;
        let event = AuditEvent {
            seq,
            at,
            kind: draft.kind,
            session_id: draft.session_id,
            user: draft.user,
            agent_id: draft.agent_id,
            domain: draft.domain,
            outcome: draft.outcome,
            detail: draft.detail,
        };
        let line = serde_json::to_string(&event)
            .map_err(|e| AuditError::Backend(format!("serialize: {e}")))?;
        // File write happens before the in-memory append: if the durable
        // backend rejects the event, seq must not advance.
        if let Some(file) = inner.file.as_mut() {
            writeln!(file, "{line}").map_err(|e| AuditError::Backend(e.to_string()))?;
        }
        if inner.mirror_stdout {
            println!("{line}");
        }
        inner.events.push(event);
        Ok(seq)
    }

    pub fn query(&self, filter: &AuditFilter) -> Vec<AuditEvent> {
        self.inner
            .lock()
            .events
            .iter()
            .filter(|e| filter.matches(e))
            .cloned()
            .collect()
    }

    /// Snapshot of the full log in seq order.
    pub fn events(&self) -> Vec<AuditEvent> {
        self.inner.lock().events.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last_seq(&self) -> u64 {
        self.inner.lock().events.len() as u64
    }

    /// Count of events of one kind — handy for completeness assertions.
    pub fn count(&self, kind: EventKind) -> usize {
        self.inner
            .lock()
            .events
            .iter()
            .filter(|e| e.kind == kind)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_is_gapless_from_one() {
        let log = AuditLog::in_memory();
        for expected in 1..=5u64 {
            let seq = log
                .append(EventDraft::new(EventKind::ContextRequested, "ok"))
                .unwrap();
            assert_eq!(seq, expected);
        }
        let events = log.events();
        let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn otp_shaped_detail_rejected_for_otp_issued() {
        let log = AuditLog::in_memory();
        let bad = EventDraft::new(EventKind::OtpIssued, "issued")
            .detail("approval_id", "AP-17")
            .detail("code", "042137");
        assert!(matches!(
            log.append(bad),
            Err(AuditError::OtpInDetail(key)) if key == "code"
        ));
        // Rejection must not burn a sequence number.
        let ok = EventDraft::new(EventKind::OtpIssued, "issued").detail("approval_id", "AP-17");
        assert_eq!(log.append(ok).unwrap(), 1);
    }

    #[test]
    fn query_filters_by_kind_and_session() {
        let log = AuditLog::in_memory();
        log.append(EventDraft::new(EventKind::SessionCreated, "ok").session("s1"))
            .unwrap();
        log.append(EventDraft::new(EventKind::ContextDenied, "deny:path").session("s1"))
            .unwrap();
        log.append(EventDraft::new(EventKind::ContextDelivered, "ok").session("s2"))
            .unwrap();

        let denials = log.query(&AuditFilter {
            kind: Some(EventKind::ContextDenied),
            ..Default::default()
        });
        assert_eq!(denials.len(), 1);
        assert_eq!(denials[0].outcome, "deny:path");

        let s1 = log.query(&AuditFilter {
            session: Some("s1".into()),
            ..Default::default()
        });
        assert_eq!(s1.len(), 2);
        assert!(s1.windows(2).all(|w| w[0].seq < w[1].seq));
    }

    #[test]
    fn injected_failure_blocks_append() {
        let log = AuditLog::in_memory();
        log.inject_failure(true);
        assert!(matches!(
            log.append(EventDraft::new(EventKind::ContextDelivered, "ok")),
            Err(AuditError::Backend(_))
        ));
        assert_eq!(log.len(), 0);
        log.inject_failure(false);
        assert_eq!(
            log.append(EventDraft::new(EventKind::ContextDelivered, "ok"))
                .unwrap(),
            1
        );
    }

    #[test]
    fn jsonl_file_backend_is_append_only_with_fixed_key_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let log = AuditLog::with_file(&path).unwrap();
        log.append(
            EventDraft::new(EventKind::SessionCreated, "ok")
                .session("s1")
                .user("alice")
                .detail("role", "partner"),
        )
        .unwrap();
        log.append(EventDraft::new(EventKind::SessionKilled, "ok").session("s1"))
            .unwrap();

        let first_read = std::fs::read_to_string(&path).unwrap();
        assert_eq!(first_read.lines().count(), 2);

        // Key order is the struct order: seq, at, kind, then attribution.
        let line = first_read.lines().next().unwrap();
        let key_positions: Vec<usize> = ["\"seq\"", "\"at\"", "\"kind\"", "\"session_id\"", "\"user\"", "\"outcome\"", "\"detail\""]
            .iter()
            .map(|k| line.find(*k).unwrap_or_else(|| panic!("{k} missing in {line}")))
            .collect();
        assert!(key_positions.windows(2).all(|w| w[0] < w[1]));

        // Round-trips through serde.
        let parsed: AuditEvent = serde_json::from_str(line).unwrap();
        assert_eq!(parsed.seq, 1);
        assert_eq!(parsed.kind, EventKind::SessionCreated);

        // Appending more never rewrites the existing prefix.
        log.append(EventDraft::new(EventKind::ContextRequested, "ok").session("s2"))
            .unwrap();
        let second_read = std::fs::read_to_string(&path).unwrap();
        assert!(second_read.starts_with(&first_read));
        assert_eq!(second_read.lines().count(), 3);
    }
}
