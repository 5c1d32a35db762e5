//! Full control-plane flows: scoped context delivery, the kill switch,
//! fail-closed behavior under engine and audit outages, the approval
//! ladder with one-time codes, freshness screening at delivery time,
//! cross-domain brokering, and pronoun follow-ups.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use tempfile::TempDir;

use ctxplane_core::audit::EventKind;
use ctxplane_core::cxri::{Sidecar, SidecarEntry, SIDECAR_FILENAME};
use ctxplane_core::permissions::{
    Action, ActionOutcome, AgentProfile, Channel, DenyReason, KillScope, PermissionError, Tier,
    UserRole,
};
use ctxplane_core::plane::{ContextPlane, ContextResponse, PlaneError};
use ctxplane_core::registry::{FreshnessState, Sensitivity};
use ctxplane_core::router::Taxonomy;

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 5, 11, 9, 0, 0).unwrap()
}

fn taxonomy() -> Taxonomy {
    Taxonomy::from_json(
        r#"{
        "sales":   ["client", "renewal", "pipeline", "contract", "quota"],
        "finance": ["invoice", "budget", "forecast"],
        "hr":      ["benefits", "payroll", "onboarding"]
    }"#,
    )
    .unwrap()
}

fn sales_manifest(dir: &Path) -> String {
    format!(
        r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: sales
spec:
  sources:
    - name: records
      type: file-system
      config: {{path: "{path}"}}
      refresh: 1h
  access:
    roles:
      - role: sales-rep
        read: ["clients/${{assigned}}/*", "pipeline/*"]
        write: ["clients/${{assigned}}/*"]
      - role: sales-manager
        read: ["*"]
        write: ["*"]
    agentPermissions:
      read: autonomous
      write:
        default: soft-approval
        paths:
          "*/contracts/*": strong-approval
          "pipeline/*": autonomous
      execute:
        send-external-email: strong-approval
        commit-to-pricing: excluded
    crossDomain:
      - {{domain: finance, mode: brokered}}
      - {{domain: hr, mode: denied}}
  freshness:
    defaults: {{maxAge: 24h, staleAction: flag}}
"#,
        path = dir.display()
    )
}

struct Rig {
    /// Holds the backing files alive for the plane's lifetime.
    _dir: TempDir,
    plane: ContextPlane,
}

impl Rig {
    fn new() -> Rig {
        let dir = TempDir::new().unwrap();
        for (path, content) in [
            (
                "clients/henderson/profile.md",
                "Henderson Industries renewal due in October. Contract value 120k. \
                 Decision maker Rita Voss.",
            ),
            (
                "clients/meridian/profile.md",
                "Meridian Group expansion opportunity. New sites planned in Austin.",
            ),
            (
                "pipeline/q3.md",
                "Q3 pipeline review: renewal forecast is strong across accounts.",
            ),
        ] {
            let full = dir.path().join(path);
            fs::create_dir_all(full.parent().unwrap()).unwrap();
            fs::write(full, content).unwrap();
        }
        let plane = ContextPlane::new(taxonomy());
        plane.apply_manifest(&sales_manifest(dir.path())).unwrap();

        let tiers = |ops: &[(&str, Tier)]| {
            ops.iter()
                .map(|(op, tier)| ((*op).to_owned(), *tier))
                .collect::<BTreeMap<String, Tier>>()
        };
        plane
            .register_role(UserRole {
                name: "sales-rep".into(),
                operations: tiers(&[
                    ("read", Tier::Autonomous),
                    ("write", Tier::Autonomous),
                    ("send-external-email", Tier::SoftApproval),
                ]),
            })
            .unwrap();
        plane
            .register_role(UserRole {
                name: "sales-manager".into(),
                operations: tiers(&[
                    ("read", Tier::Autonomous),
                    ("write", Tier::Autonomous),
                    ("send-external-email", Tier::Autonomous),
                ]),
            })
            .unwrap();
        plane
            .register_profile(AgentProfile {
                name: "rep-agent".into(),
                user_role: "sales-rep".into(),
                operations: tiers(&[("read", Tier::Autonomous), ("write", Tier::Autonomous)]),
            })
            .unwrap();
        plane
            .register_profile(AgentProfile {
                name: "mgr-agent".into(),
                user_role: "sales-manager".into(),
                operations: tiers(&[("read", Tier::Autonomous), ("write", Tier::Autonomous)]),
            })
            .unwrap();

        plane.reconcile_now(t0());
        Rig { _dir: dir, plane }
    }

    fn rep_session(&self) -> String {
        self.plane
            .create_session(
                "priya",
                "sales-rep",
                "rep-agent",
                "sales",
                vec!["henderson".into()],
                t0(),
            )
            .unwrap()
            .id
    }

    fn manager_session(&self) -> String {
        self.plane
            .create_session("dana", "sales-manager", "mgr-agent", "sales", vec![], t0())
            .unwrap()
            .id
    }
}

fn paths(response: &ContextResponse) -> Vec<&str> {
    response.units.iter().map(|u| u.path.as_str()).collect()
}

#[test]
fn context_is_scoped_to_role_and_assignment() {
    let rig = Rig::new();
    let rep = rig.rep_session();
    let response = rig
        .plane
        .request_context(&rep, "renewal status for the henderson client", None, t0())
        .unwrap();
    assert_eq!(response.intent.top_domain(), Some("sales"));
    assert!(!response.intent.fallback);
    let delivered = paths(&response);
    assert!(delivered.contains(&"clients/henderson/profile.md"));
    assert!(delivered.contains(&"pipeline/q3.md"));
    assert!(
        !delivered.contains(&"clients/meridian/profile.md"),
        "another client's file must never reach this rep"
    );

    let manager = rig.manager_session();
    let response = rig
        .plane
        .request_context(&manager, "renewal status across clients", None, t0())
        .unwrap();
    assert!(paths(&response).contains(&"clients/meridian/profile.md"));

    let audit = rig.plane.audit();
    assert_eq!(audit.count(EventKind::ContextRequested), 2);
    assert_eq!(audit.count(EventKind::ContextDelivered), 2);
    assert_eq!(audit.count(EventKind::SessionCreated), 2);
}

#[test]
fn delivery_respects_an_explicit_budget() {
    let rig = Rig::new();
    let manager = rig.manager_session();
    let response = rig
        .plane
        .request_context(&manager, "renewal status across clients", Some(10), t0())
        .unwrap();
    assert_eq!(response.units.len(), 1, "tiny budget keeps only the best unit");
    assert!(response.units[0].truncated);
    assert!(response.total_tokens <= 10);
    assert_eq!(response.budget, 10);
}

#[test]
fn kill_switch_cuts_context_and_actions() {
    let rig = Rig::new();
    let rep = rig.rep_session();
    assert_eq!(rig.plane.kill(&KillScope::Session(rep.clone()), t0()), 1);

    let err = rig
        .plane
        .request_context(&rep, "henderson renewal", None, t0())
        .unwrap_err();
    assert!(matches!(err, PlaneError::Denied(DenyReason::SessionKilled)));

    let outcome = rig
        .plane
        .submit_action(
            &rep,
            Action {
                operation: "write".into(),
                domain: "sales".into(),
                path: Some("pipeline/update.md".into()),
                body: "Q3 numbers".into(),
            },
            t0(),
        )
        .unwrap();
    assert!(matches!(
        outcome,
        ActionOutcome::Refused {
            reason: DenyReason::SessionKilled
        }
    ));

    let audit = rig.plane.audit();
    assert_eq!(audit.count(EventKind::SessionKilled), 1);
    assert!(audit.count(EventKind::ContextDenied) >= 2);
    assert_eq!(audit.count(EventKind::ContextDelivered), 0);
}

#[test]
fn engine_outage_denies_everything() {
    let rig = Rig::new();
    let rep = rig.rep_session();
    rig.plane.set_engine_available(false);

    let err = rig
        .plane
        .request_context(&rep, "henderson renewal", None, t0())
        .unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Denied(DenyReason::EngineUnavailable)
    ));
    let err = rig
        .plane
        .submit_action(
            &rep,
            Action {
                operation: "read".into(),
                domain: "sales".into(),
                path: None,
                body: String::new(),
            },
            t0(),
        )
        .unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Permission(PermissionError::Unavailable)
    ));
    let err = rig
        .plane
        .create_session("nils", "sales-rep", "rep-agent", "sales", vec![], t0())
        .unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Permission(PermissionError::Unavailable)
    ));

    rig.plane.set_engine_available(true);
    assert!(rig
        .plane
        .request_context(&rep, "henderson renewal", None, t0())
        .is_ok());
}

#[test]
fn audit_outage_withholds_results_and_leaves_no_side_effects() {
    let rig = Rig::new();
    let rep = rig.rep_session();
    rig.plane.audit().inject_failure(true);

    let err = rig
        .plane
        .request_context(&rep, "henderson renewal", None, t0())
        .unwrap_err();
    assert!(matches!(err, PlaneError::Audit(_)));

    // An action that cannot be recorded is never handed to the engine.
    let err = rig
        .plane
        .submit_action(
            &rep,
            Action {
                operation: "write".into(),
                domain: "sales".into(),
                path: Some("clients/henderson/notes.md".into()),
                body: "call notes".into(),
            },
            t0(),
        )
        .unwrap_err();
    assert!(matches!(err, PlaneError::Audit(_)));

    rig.plane.audit().inject_failure(false);
    let outcome = rig
        .plane
        .submit_action(
            &rep,
            Action {
                operation: "write".into(),
                domain: "sales".into(),
                path: Some("clients/henderson/notes.md".into()),
                body: "call notes".into(),
            },
            t0(),
        )
        .unwrap();
    // The refused submission minted nothing: this is the first approval.
    match outcome {
        ActionOutcome::Pending(approval) => assert_eq!(approval.id, "apr-1"),
        other => panic!("expected a pending approval, got {other:?}"),
    }
}

#[test]
fn approval_ladder_runs_from_autonomous_to_strong() {
    let rig = Rig::new();
    let rep = rig.rep_session();
    let act = |op: &str, path: Option<&str>| Action {
        operation: op.into(),
        domain: "sales".into(),
        path: path.map(str::to_owned),
        body: "body".into(),
    };

    // Declared autonomous for pipeline/*: runs immediately.
    let outcome = rig
        .plane
        .submit_action(&rep, act("write", Some("pipeline/update.md")), t0())
        .unwrap();
    assert!(matches!(outcome, ActionOutcome::Executed { .. }));

    // Default write tier: parked for soft approval, then approved in-channel.
    let outcome = rig
        .plane
        .submit_action(&rep, act("write", Some("clients/henderson/notes.md")), t0())
        .unwrap();
    let soft = match outcome {
        ActionOutcome::Pending(a) => a,
        other => panic!("expected pending, got {other:?}"),
    };
    assert_eq!(soft.tier, Tier::SoftApproval);
    let resolved = rig.plane.resolve_soft(&soft.id, true, t0()).unwrap();
    assert_eq!(
        serde_json::to_value(resolved.status).unwrap(),
        serde_json::json!("approved")
    );
    // Approving twice never works.
    let err = rig.plane.resolve_soft(&soft.id, true, t0()).unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Permission(PermissionError::NotPending(_))
    ));

    // Contract paths demand the strong tier and an out-of-band code.
    let outcome = rig
        .plane
        .submit_action(
            &rep,
            act("write", Some("clients/henderson/contracts/msa.md")),
            t0(),
        )
        .unwrap();
    let strong = match outcome {
        ActionOutcome::Pending(a) => a,
        other => panic!("expected pending, got {other:?}"),
    };
    assert_eq!(strong.tier, Tier::StrongApproval);

    // The code exists admin-side only; the approval object never carries it.
    let code = rig.plane.issued_otp(&strong.id).expect("code issued");
    assert_eq!(code.len(), 6);
    let approval_json = serde_json::to_string(&strong).unwrap();
    assert!(
        !approval_json.contains(&code),
        "one-time code must not appear in the approval"
    );

    // Wrong code: counted, still pending.
    let wrong = if code == "000000" { "000001" } else { "000000" };
    let err = rig
        .plane
        .resolve_strong(&strong.id, wrong, Channel::OutOfBand, t0())
        .unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Permission(PermissionError::WrongOtp(_))
    ));

    // Right code on the agent channel: refused, code survives.
    let err = rig
        .plane
        .resolve_strong(&strong.id, &code, Channel::Agent, t0())
        .unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Permission(PermissionError::WrongChannel)
    ));

    // Right code, right channel: approved.
    rig.plane
        .resolve_strong(&strong.id, &code, Channel::OutOfBand, t0())
        .unwrap();

    // The consumed code can never approve again.
    let err = rig
        .plane
        .resolve_strong(&strong.id, &code, Channel::OutOfBand, t0())
        .unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Permission(PermissionError::Replay(_))
    ));

    // Excluded operations are refused outright.
    let outcome = rig
        .plane
        .submit_action(&rep, act("commit-to-pricing", None), t0())
        .unwrap();
    assert!(matches!(
        outcome,
        ActionOutcome::Refused {
            reason: DenyReason::OperationExcluded
        }
    ));

    let audit = rig.plane.audit();
    assert_eq!(audit.count(EventKind::ActionSubmitted), 4);
    // pipeline write + soft approval + strong approval.
    assert_eq!(audit.count(EventKind::ActionExecuted), 3);
    assert_eq!(audit.count(EventKind::ApprovalRequested), 2);
    assert_eq!(audit.count(EventKind::OtpIssued), 1);
    assert_eq!(audit.count(EventKind::ApprovalResolved), 2);
    // Wrong code + wrong channel write rejection records.
    assert!(audit.count(EventKind::ApprovalRejected) >= 1);
}

#[test]
fn strong_approvals_expire_with_their_code() {
    let rig = Rig::new();
    let rep = rig.rep_session();
    let outcome = rig
        .plane
        .submit_action(
            &rep,
            Action {
                operation: "write".into(),
                domain: "sales".into(),
                path: Some("clients/henderson/contracts/msa.md".into()),
                body: "terms".into(),
            },
            t0(),
        )
        .unwrap();
    let strong = match outcome {
        ActionOutcome::Pending(a) => a,
        other => panic!("expected pending, got {other:?}"),
    };
    let code = rig.plane.issued_otp(&strong.id).unwrap();

    // Lazily reported as expired even before anyone touches it.
    let late = t0() + Duration::seconds(301);
    let snapshot = rig.plane.approval(&strong.id, late).unwrap();
    assert_eq!(
        serde_json::to_value(snapshot.status).unwrap(),
        serde_json::json!("expired")
    );

    let err = rig
        .plane
        .resolve_strong(&strong.id, &code, Channel::OutOfBand, late)
        .unwrap_err();
    assert!(matches!(
        err,
        PlaneError::Permission(PermissionError::Expired(_))
    ));
}

#[test]
fn expired_content_is_withheld_and_stale_content_is_labeled() {
    let rig = Rig::new();
    let manager = rig.manager_session();

    // Thirty hours out, nothing has re-verified the corpus: everything is
    // computed stale at delivery time even though the stamps still read
    // fresh.
    let stale_time = t0() + Duration::hours(30);
    let response = rig
        .plane
        .request_context(&manager, "renewal status across clients", None, stale_time)
        .unwrap();
    assert!(!response.units.is_empty());
    assert!(response
        .units
        .iter()
        .all(|u| u.freshness == FreshnessState::Stale));
    // The stored stamps were not touched by the read path.
    assert_eq!(
        rig.plane
            .registry()
            .unit_current("sales:records:pipeline/q3.md")
            .unwrap()
            .freshness,
        FreshnessState::Fresh
    );

    // Three days out the corpus is expired and withheld entirely.
    let expired_time = t0() + Duration::hours(72);
    let response = rig
        .plane
        .request_context(&manager, "renewal status across clients", None, expired_time)
        .unwrap();
    assert!(response.units.is_empty());
}

#[test]
fn conflicted_slots_are_withheld_until_resolved() {
    let rig = Rig::new();
    let manager = rig.manager_session();

    // Force a second live version of the pipeline file.
    let mut clone = rig
        .plane
        .registry()
        .unit_current("sales:records:pipeline/q3.md")
        .unwrap()
        .unit;
    clone.content = "Q3 pipeline review: renewal forecast now uncertain.".into();
    clone.metadata.timestamp += Duration::minutes(30);
    rig.plane.registry().upsert_unit_retaining_live(clone).unwrap();
    assert_eq!(rig.plane.registry().conflicted_slots("sales").len(), 1);

    let response = rig
        .plane
        .request_context(&manager, "pipeline review", None, t0() + Duration::hours(1))
        .unwrap();
    assert!(
        !paths(&response).contains(&"pipeline/q3.md"),
        "neither version of a conflicted slot may be delivered"
    );

    // The next reconcile cycle resolves it; delivery resumes.
    rig.plane.reconcile_now(t0() + Duration::hours(1));
    let response = rig
        .plane
        .request_context(
            &manager,
            "pipeline review",
            None,
            t0() + Duration::hours(1) + Duration::minutes(1),
        )
        .unwrap();
    let unit = response
        .units
        .iter()
        .find(|u| u.path == "pipeline/q3.md")
        .expect("resolved slot delivers again");
    assert!(unit.content.contains("uncertain"), "newest version won");
}

#[test]
fn cross_domain_queries_honor_broker_modes() {
    let rig = Rig::new();

    let finance_dir = TempDir::new().unwrap();
    fs::create_dir_all(finance_dir.path().join("reports")).unwrap();
    fs::write(
        finance_dir.path().join("reports/budget.md"),
        "Annual budget forecast and the invoice schedule for all accounts.",
    )
    .unwrap();
    rig.plane
        .apply_manifest(&format!(
            r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: finance
spec:
  sources:
    - name: ledger
      type: file-system
      config: {{path: "{path}"}}
      refresh: 1h
  access:
    roles:
      - role: sales-rep
        read: ["reports/*"]
      - role: finance-analyst
        read: ["*"]
        write: ["*"]
"#,
            path = finance_dir.path().display()
        ))
        .unwrap();

    let hr_dir = TempDir::new().unwrap();
    fs::create_dir_all(hr_dir.path().join("people")).unwrap();
    fs::write(
        hr_dir.path().join("people/handbook.md"),
        "Benefits enrollment windows and the payroll calendar.",
    )
    .unwrap();
    rig.plane
        .apply_manifest(&format!(
            r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: hr
spec:
  sources:
    - name: handbook
      type: file-system
      config: {{path: "{path}"}}
      refresh: 1h
  access:
    roles:
      - role: sales-rep
        read: ["*"]
"#,
            path = hr_dir.path().display()
        ))
        .unwrap();
    rig.plane.reconcile_now(t0() + Duration::minutes(1));

    let rep = rig.rep_session();

    // Finance is brokered from sales: the query reaches it and the rep's
    // role is honored inside it.
    let response = rig
        .plane
        .request_context(
            &rep,
            "budget forecast and invoice schedule",
            None,
            t0() + Duration::minutes(2),
        )
        .unwrap();
    assert!(response
        .units
        .iter()
        .any(|u| u.domain == "finance" && u.path == "reports/budget.md"));

    // HR is declared denied: even though its own rules would admit the
    // role, the home manifest refuses to broker the query.
    let response = rig
        .plane
        .request_context(
            &rep,
            "benefits and payroll onboarding",
            None,
            t0() + Duration::minutes(3),
        )
        .unwrap();
    assert!(
        response.units.iter().all(|u| u.domain != "hr"),
        "denied domains must contribute nothing"
    );
}

#[test]
fn pronoun_follow_ups_resolve_against_the_last_entity() {
    // A git-style source carries entity tags in its metadata sidecar; those
    // tags are what the router learns entities from.
    let dir = TempDir::new().unwrap();
    for (path, content) in [
        (
            "clients/henderson/profile.md",
            "Henderson Industries renewal due in October. Contract value 120k.",
        ),
        (
            "clients/meridian/profile.md",
            "Meridian Group expansion opportunity in Austin.",
        ),
    ] {
        let full = dir.path().join(path);
        fs::create_dir_all(full.parent().unwrap()).unwrap();
        fs::write(full, content).unwrap();
    }
    let mut sidecar = Sidecar::new();
    for (path, entity) in [
        ("clients/henderson/profile.md", "henderson"),
        ("clients/meridian/profile.md", "meridian"),
    ] {
        sidecar.insert(
            path.to_owned(),
            SidecarEntry {
                author: "priya".into(),
                timestamp: t0() - Duration::hours(1),
                sensitivity: Sensitivity::Internal,
                authority: 0.9,
                entities: vec![entity.to_owned()],
            },
        );
    }
    fs::write(
        dir.path().join(SIDECAR_FILENAME),
        serde_json::to_string_pretty(&sidecar).unwrap(),
    )
    .unwrap();

    let plane = ContextPlane::new(taxonomy());
    plane
        .apply_manifest(&format!(
            r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: sales
spec:
  sources:
    - name: crm
      type: git-repo
      config: {{repo: "{path}"}}
      refresh: 1h
  access:
    roles:
      - role: sales-rep
        read: ["clients/${{assigned}}/*"]
"#,
            path = dir.path().display()
        ))
        .unwrap();
    plane
        .register_role(UserRole {
            name: "sales-rep".into(),
            operations: [
                ("read".to_owned(), Tier::Autonomous),
                ("write".to_owned(), Tier::SoftApproval),
            ]
            .into(),
        })
        .unwrap();
    plane
        .register_profile(AgentProfile {
            name: "rep-agent".into(),
            user_role: "sales-rep".into(),
            operations: [("read".to_owned(), Tier::Autonomous)].into(),
        })
        .unwrap();
    plane.reconcile_now(t0());

    let session = plane
        .create_session(
            "priya",
            "sales-rep",
            "rep-agent",
            "sales",
            vec!["henderson".into()],
            t0(),
        )
        .unwrap()
        .id;

    let first = plane
        .request_context(&session, "renewal plans for henderson", None, t0())
        .unwrap();
    assert_eq!(first.intent.entities, vec!["henderson"]);

    let follow_up = plane
        .request_context(&session, "what is their contract value", None, t0())
        .unwrap();
    assert!(
        follow_up.intent.resolved_query.contains("henderson"),
        "pronoun must resolve to the previously discussed entity, got {:?}",
        follow_up.intent.resolved_query
    );
    assert!(paths(&follow_up).contains(&"clients/henderson/profile.md"));
}
