//! The correctness experiments: routing accuracy and misrouting safety,
//! the seven-case permission suite, freshness state transitions with
//! detection timings, the concurrent soak, and the eight-case approval
//! isolation suite.

use std::collections::BTreeMap;
use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tempfile::TempDir;

use ctxplane_core::audit::EventKind;
use ctxplane_core::freshness::state_for_age;
use ctxplane_core::registry::FreshnessState;
use ctxplane_core::manifest::{parse_manifest, CrossDomainMode, DomainManifest};
use ctxplane_core::permissions::{
    Action, ActionOutcome, AgentProfile, ApprovalStatus, Channel, KillScope, PermissionError,
    Tier,
};
use ctxplane_core::plane::{ContextPlane, PlaneError};
use ctxplane_core::router::{Router, Taxonomy};

use crate::benchmark::Benchmark;
use crate::corpus::{self, OrgUser, DOMAINS};
use crate::metrics::LatencyStats;
use crate::world::{query_time, GovernedWorld};

/// One named check inside an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct CaseRow {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn case(name: &'static str, passed: bool, detail: impl Into<String>) -> CaseRow {
    CaseRow {
        name,
        passed,
        detail: detail.into(),
    }
}

/// Authorization oracle used to judge deliveries, written against the
/// manifests rather than the engine: the unit's domain must be the user's
/// home or brokered from it, and some read scope of the user's role in the
/// unit's domain must match the path under the user's assignments.
pub fn user_may_read(
    manifests: &BTreeMap<String, DomainManifest>,
    user: &OrgUser,
    domain: &str,
    path: &str,
) -> bool {
    let domain_ok = domain == user.home_domain
        || manifests
            .get(&user.home_domain)
            .map(|m| m.access().cross_domain_mode(domain) == Some(CrossDomainMode::Brokered))
            .unwrap_or(false);
    if !domain_ok {
        return false;
    }
    let Some(manifest) = manifests.get(domain) else {
        return false;
    };
    let Some(rule) = manifest.access().role(&user.role) else {
        return false;
    };
    rule.read
        .iter()
        .any(|p| p.matches_with_assigned(path, &user.assigned))
}

fn corpus_manifests(governed: &GovernedWorld) -> BTreeMap<String, DomainManifest> {
    DOMAINS
        .iter()
        .map(|d| {
            let manifest =
                parse_manifest(&governed.corpus.manifest_yaml(d)).expect("seed manifest parses");
            (d.to_string(), manifest)
        })
        .collect()
}

// ---------------------------------------------------------------- C1

#[derive(Debug, Clone, Serialize)]
pub struct C1Report {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub classify_latency: LatencyStats,
    pub fuzz_queries: usize,
    pub fuzz_violations: usize,
}

/// Domain-classification accuracy over the 200-query benchmark, plus the
/// misrouting-safety fuzz: 1,000 adversarial keyword-salad queries driven
/// through real sessions, asserting that wherever the router lands, no
/// delivery ever violates the authorization oracle.
pub fn run_c1(governed: &GovernedWorld, benchmark: &Benchmark) -> C1Report {
    let taxonomy =
        Taxonomy::from_json(&governed.corpus.taxonomy_json()).expect("taxonomy parses");
    let router = Router::new(taxonomy.clone());
    let mut correct = 0;
    let mut latencies = Vec::with_capacity(benchmark.queries.len());
    for query in &benchmark.queries {
        let user = governed.corpus.user(&query.user);
        let started = Instant::now();
        let intent = router.classify(&query.text, &user.home_domain, None);
        latencies.push(started.elapsed().as_secs_f64() * 1000.0);
        if intent
            .top_domain()
            .is_some_and(|top| query.expected_domains.iter().any(|d| d == top))
        {
            correct += 1;
        }
    }

    // The fuzz pool mixes every domain's keywords with entity names so the
    // classifier's choice is effectively adversarial per query.
    let mut pool: Vec<String> = taxonomy
        .domains
        .values()
        .flat_map(|words| words.iter().cloned())
        .collect();
    pool.extend(corpus::CLIENTS.iter().map(|c| c.to_string()));
    pool.extend(["the", "latest", "please", "summarize"].map(String::from));

    let manifests = corpus_manifests(governed);
    let users = governed.corpus.users.clone();
    let mut sessions: BTreeMap<String, String> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(governed.corpus.seed ^ 0xC1);
    let mut violations = 0;
    const FUZZ: usize = 1000;
    for _ in 0..FUZZ {
        let user = users.choose(&mut rng).expect("org populated").clone();
        let words = (0..rng.gen_range(3..=8))
            .map(|_| pool.choose(&mut rng).expect("pool populated").as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let session = sessions
            .entry(user.name.clone())
            .or_insert_with(|| governed.session_for(&user.name))
            .clone();
        let response = governed
            .plane
            .request_context(&session, &words, None, query_time())
            .expect("fuzz query runs");
        for unit in &response.units {
            if !user_may_read(&manifests, &user, &unit.domain, &unit.path) {
                violations += 1;
            }
        }
    }

    C1Report {
        total: benchmark.queries.len(),
        correct,
        accuracy: correct as f64 / benchmark.queries.len() as f64,
        classify_latency: LatencyStats::from_millis(&latencies),
        fuzz_queries: FUZZ,
        fuzz_violations: violations,
    }
}

// ---------------------------------------------------------------- C2

#[derive(Debug, Clone, Serialize)]
pub struct C2Report {
    pub cases: Vec<CaseRow>,
    pub unauthorized_deliveries: usize,
    pub false_positives: usize,
    pub invariant_violations: usize,
}

impl C2Report {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
            && self.unauthorized_deliveries == 0
            && self.false_positives == 0
            && self.invariant_violations == 0
    }
}

/// The seven-case permission suite: authorized access, cross-domain
/// denial, kill switch, the three invalid profile registrations, and
/// fail-closed behavior with the engine down.
pub fn run_c2() -> C2Report {
    let governed = GovernedWorld::with_seed(42);
    let manifests = corpus_manifests(&governed);
    let now = query_time();
    let mut cases = Vec::new();
    let mut unauthorized = 0;
    let mut false_positives = 0;
    let mut invariant_violations = 0;

    // 1. Authorized access: a rep asks about their own pipeline and gets
    // it; every delivered unit must pass the oracle.
    let priya = governed.corpus.user("priya").clone();
    let priya_session = governed.session_for("priya");
    let response = governed
        .plane
        .request_context(&priya_session, "pipeline forecast for the quarter", None, now)
        .expect("authorized query runs");
    let pipeline_id = governed.corpus.file("sales", "pipeline.md").unit_id();
    let got_pipeline = response.units.iter().any(|u| u.id == pipeline_id);
    if !got_pipeline {
        false_positives += 1;
    }
    let mut bad = 0;
    for unit in &response.units {
        if !user_may_read(&manifests, &priya, &unit.domain, &unit.path) {
            bad += 1;
        }
    }
    unauthorized += bad;
    cases.push(case(
        "authorized access",
        got_pipeline && bad == 0,
        format!("{} units delivered, pipeline present: {got_pipeline}", response.units.len()),
    ));

    // 2. Cross-domain denial: the same session asks for HR material; the
    // sales manifest denies hr, so nothing from hr may arrive.
    let response = governed
        .plane
        .request_context(&priya_session, "salary compensation bands policy", None, now)
        .expect("denied-domain query runs");
    let hr_units = response.units.iter().filter(|u| u.domain == "hr").count();
    unauthorized += hr_units;
    cases.push(case(
        "cross-domain denial",
        hr_units == 0,
        format!("{hr_units} hr units crossed a denied boundary"),
    ));

    // 3. Kill switch: a killed session gets nothing afterwards, and other
    // sessions are untouched.
    let dana_session = governed.session_for("dana");
    let killed = governed
        .plane
        .kill(&KillScope::Session(dana_session.clone()), now);
    let after = governed
        .plane
        .request_context(&dana_session, "pipeline forecast", None, now);
    let action_after = governed.plane.submit_action(
        &dana_session,
        Action {
            operation: "send-external-email".into(),
            domain: "sales".into(),
            path: None,
            body: "post-kill send".into(),
        },
        now,
    );
    let others_fine = governed
        .plane
        .request_context(&priya_session, "renewal opportunities", None, now)
        .is_ok();
    let blocked = after.is_err()
        && !matches!(action_after, Ok(ActionOutcome::Executed { .. }))
        && !matches!(action_after, Ok(ActionOutcome::Pending(_)));
    if !blocked {
        invariant_violations += 1;
    }
    cases.push(case(
        "kill switch",
        killed == 1 && blocked && others_fine,
        format!("killed {killed} session(s); requests and actions now refused"),
    ));

    // 4–6. Invalid delegations must be rejected at registration.
    let superset = governed.plane.register_profile(AgentProfile {
        name: "rogue-superset".into(),
        user_role: "sales-rep".into(),
        operations: [("read".to_string(), Tier::Autonomous), ("sign-contract".to_string(), Tier::StrongApproval)]
            .into_iter()
            .collect(),
    });
    let superset_ok = matches!(superset, Err(PermissionError::SupersetViolation { .. }));
    if !superset_ok {
        invariant_violations += 1;
    }
    cases.push(case(
        "superset registration rejected",
        superset_ok,
        format!("{superset:?}"),
    ));

    let equal = governed.plane.register_profile(AgentProfile {
        name: "rogue-equal".into(),
        user_role: "delivery-consultant".into(),
        operations: [
            ("read".to_string(), Tier::Autonomous),
            ("export-report".to_string(), Tier::SoftApproval),
        ]
        .into_iter()
        .collect(),
    });
    let equal_ok = matches!(equal, Err(PermissionError::EqualSetViolation { .. }));
    if !equal_ok {
        invariant_violations += 1;
    }
    cases.push(case(
        "equal-set registration rejected",
        equal_ok,
        format!("{equal:?}"),
    ));

    let lax = governed.plane.register_profile(AgentProfile {
        name: "rogue-lax".into(),
        user_role: "sales-rep".into(),
        operations: [("send-external-email".to_string(), Tier::Autonomous)]
            .into_iter()
            .collect(),
    });
    let lax_ok = matches!(lax, Err(PermissionError::TierViolation { .. }));
    if !lax_ok {
        invariant_violations += 1;
    }
    cases.push(case(
        "tier-violation registration rejected",
        lax_ok,
        format!("{lax:?}"),
    ));

    // 7. Fail closed: with the engine down, even a previously working
    // session gets nothing.
    governed.plane.set_engine_available(false);
    let down = governed
        .plane
        .request_context(&priya_session, "pipeline forecast", None, now);
    let denied = down.is_err();
    if !denied {
        invariant_violations += 1;
        unauthorized += 1;
    }
    governed.plane.set_engine_available(true);
    let recovered = governed
        .plane
        .request_context(&priya_session, "pipeline forecast", None, now)
        .is_ok();
    cases.push(case(
        "fail closed on engine outage",
        denied && recovered,
        format!("denied during outage: {denied}; recovered after: {recovered}"),
    ));

    C2Report {
        cases,
        unauthorized_deliveries: unauthorized,
        false_positives,
        invariant_violations,
    }
}

// ---------------------------------------------------------------- C3

#[derive(Debug, Clone, Serialize)]
pub struct C3Report {
    pub rows: Vec<CaseRow>,
    pub transition_sequence: Vec<String>,
    pub stale_detection_ms: f64,
    pub disconnect_detection_ms: f64,
    pub cold_cycle_20_ms: f64,
    pub warm_cycle_20_ms: f64,
}

impl C3Report {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|c| c.passed)
    }
}

fn stamped_state(governed: &GovernedWorld, domain: &str, unit_id: &str) -> Option<FreshnessState> {
    governed
        .plane
        .registry()
        .annotated_live_units(domain)
        .ok()?
        .into_iter()
        .find(|a| a.unit.id == unit_id)
        .map(|a| a.freshness)
}

/// Freshness lifecycle: observe every state transition on real units,
/// time stale and disconnect detection, and bound the reconcile cycle on
/// a 20-source domain.
pub fn run_c3() -> C3Report {
    let governed = GovernedWorld::with_seed(42);
    let mut rows = Vec::new();

    let pipeline_id = governed.corpus.file("sales", "pipeline.md").unit_id();
    let pricing_id = governed.corpus.file("sales", "pricing.md").unit_id();

    // 1. Fresh within the window: every unit is verified at ingest, so the
    // first cycle stamps the whole corpus fresh — age counts from the last
    // verification, not from the document's authorship date.
    let fresh_now = stamped_state(&governed, "sales", &pipeline_id);
    let pricing_start = stamped_state(&governed, "sales", &pricing_id);
    rows.push(case(
        "fresh within max age",
        fresh_now == Some(FreshnessState::Fresh)
            && pricing_start == Some(FreshnessState::Fresh),
        format!("pipeline stamped {fresh_now:?}, pricing stamped {pricing_start:?} at the epoch"),
    ));

    // 2. Stale past the window: 80 h after ingest the cycle flags pricing
    // (72 h override) while the 168 h default leaves pipeline untouched.
    governed.plane.reconcile_now(corpus::t0() + Duration::hours(80));
    let pricing_mid = stamped_state(&governed, "sales", &pricing_id);
    let pipeline_mid = stamped_state(&governed, "sales", &pipeline_id);
    rows.push(case(
        "stale past max age",
        pricing_mid == Some(FreshnessState::Stale)
            && pipeline_mid == Some(FreshnessState::Fresh),
        format!("at 80 h: pricing {pricing_mid:?}, pipeline {pipeline_mid:?}"),
    ));

    // 3. Expired past twice the window: at 150 h pricing crosses 2 × 72 h;
    // pipeline is still inside its default window.
    governed.plane.reconcile_now(corpus::t0() + Duration::hours(150));
    let pricing_late = stamped_state(&governed, "sales", &pricing_id);
    rows.push(case(
        "expired past twice max age",
        pricing_late == Some(FreshnessState::Expired),
        format!("pricing stamped {pricing_late:?} at 150 h"),
    ));

    // 4. The full walk on one unit — fresh, then stale, then expired — as
    // stamped by successive cycles.
    let sequence = vec![
        format!("{pricing_start:?}"),
        format!("{pricing_mid:?}"),
        format!("{pricing_late:?}"),
    ];
    let transitions_ok = pricing_start == Some(FreshnessState::Fresh)
        && pricing_mid == Some(FreshnessState::Stale)
        && pricing_late == Some(FreshnessState::Expired);
    rows.push(case(
        "fresh to stale to expired observed",
        transitions_ok,
        sequence.join(" → "),
    ));

    // 5. Stale detection latency: at 200 h every unit on a 168 h window is
    // due a flip the next walk will stamp; the in-memory check that notices
    // them is measured on its own without source IO.
    let manifests = corpus_manifests(&governed);
    let detect_at = corpus::t0() + Duration::hours(200);
    let started = Instant::now();
    let mut flips = 0;
    for domain in DOMAINS {
        let policy = manifests[domain].freshness().clone();
        for annotated in governed
            .plane
            .registry()
            .annotated_live_units(domain)
            .expect("domain live")
        {
            let age = (detect_at - annotated.last_verified).num_seconds();
            let rule = policy.rule_for(&annotated.unit.metadata.path);
            let computed = state_for_age(age, rule.max_age.as_seconds());
            if computed != annotated.freshness {
                flips += 1;
            }
        }
    }
    let stale_detection_ms = started.elapsed().as_secs_f64() * 1000.0;
    rows.push(case(
        "stale detection under 10 ms",
        stale_detection_ms < 10.0 && flips > 0,
        format!("{flips} pending flips found in {stale_detection_ms:.3} ms"),
    ));

    // Absorb the pending flag churn so the disconnect timing below measures
    // only the broken source, not the backlog of stale stamps.
    governed.plane.reconcile_now(detect_at);

    // 6. Disconnect detection: break a source directory and time the cycle
    // that notices.
    fs::rename(
        governed.corpus.root.join("data/hr"),
        governed.corpus.root.join("data/hr-moved"),
    )
    .expect("hr source breaks");
    let started = Instant::now();
    governed.plane.reconcile_now(detect_at + Duration::minutes(1));
    let disconnect_detection_ms = started.elapsed().as_secs_f64() * 1000.0;
    let hr_down = governed
        .plane
        .source_states("hr")
        .expect("hr states")
        .iter()
        .any(|s| s.status != ctxplane_core::registry::SourceStatus::Connected);
    rows.push(case(
        "disconnect detection under 10 ms",
        hr_down && disconnect_detection_ms < 10.0,
        format!("broken source surfaced in {disconnect_detection_ms:.3} ms"),
    ));

    // 7. A deleted file is archived by the next cycle.
    fs::remove_file(governed.corpus.root.join("data/sales/renewals.md"))
        .expect("renewals removed");
    governed.plane.reconcile_now(detect_at + Duration::minutes(2));
    let renewals_id = governed.corpus.file("sales", "renewals.md").unit_id();
    let renewals_live = stamped_state(&governed, "sales", &renewals_id).is_some();
    rows.push(case(
        "deleted file archived",
        !renewals_live,
        format!("renewals still live after deletion: {renewals_live}"),
    ));

    // 8. A conflicted slot is stamped, withheld, and resolved to newest by
    // the next cycle.
    let status_id = governed.corpus.file("delivery", "meridian-status.md").unit_id();
    let registry = governed.plane.registry();
    let original = registry
        .annotated_live_units("delivery")
        .expect("delivery live")
        .into_iter()
        .map(|a| a.unit)
        .find(|u| u.id == status_id)
        .expect("status ingested");
    let mut rival = original.clone();
    rival.content = "Meridian onboarding: revised update, Denver site slipped a week.".into();
    rival.metadata.timestamp = original.metadata.timestamp + Duration::hours(3);
    registry
        .upsert_unit_retaining_live(rival)
        .expect("rival version lands");
    let conflicted = stamped_state(&governed, "delivery", &status_id);
    governed.plane.reconcile_now(detect_at + Duration::minutes(3));
    let resolved = registry
        .annotated_live_units("delivery")
        .expect("delivery live")
        .into_iter()
        .filter(|a| a.unit.id == status_id)
        .collect::<Vec<_>>();
    let resolved_ok = resolved.len() == 1
        && resolved[0].unit.content.contains("revised update")
        && resolved[0].freshness != FreshnessState::Conflicted;
    rows.push(case(
        "conflict stamped then resolved to newest",
        conflicted == Some(FreshnessState::Conflicted) && resolved_ok,
        format!("stamped {conflicted:?}; {} live version(s) after the cycle", resolved.len()),
    ));

    // 9. Cycle bound on a 20-source domain: the steady-state cycle stays
    // well under the budget.
    let scale_dir = TempDir::new().expect("scale dir");
    let mut source_entries = String::new();
    for i in 0..20 {
        let dir = scale_dir.path().join(format!("src{i:02}"));
        for j in 0..3 {
            let path = dir.join(format!("note-{j}.md"));
            fs::create_dir_all(&dir).expect("source dir");
            fs::write(&path, format!("scale note {i}-{j} for cycle timing")).expect("note");
        }
        source_entries.push_str(&format!(
            "    - name: src{i:02}\n      type: file-system\n      config: {{path: \"{}\"}}\n      refresh: 1h\n",
            dir.display()
        ));
    }
    let manifest = format!(
        "apiVersion: context/v1\nkind: ContextDomain\nmetadata:\n  name: scale\n  namespace: firm\nspec:\n  sources:\n{source_entries}  access:\n    roles:\n      - role: ops-admin\n        read: [\"*\"]\n    agentPermissions:\n      read: autonomous\n      write:\n        default: soft-approval\n  freshness:\n    defaults: {{maxAge: 168h, staleAction: flag}}\n  routing:\n    tokenBudget: 8000\n"
    );
    let taxonomy = Taxonomy::from_json(r#"{"scale": ["cycle"]}"#).expect("scale taxonomy");
    let scale_plane = ContextPlane::new(taxonomy);
    scale_plane.apply_manifest(&manifest).expect("scale manifest applies");
    let started = Instant::now();
    scale_plane.reconcile_now(corpus::t0());
    let cold_cycle_20_ms = started.elapsed().as_secs_f64() * 1000.0;
    let started = Instant::now();
    scale_plane.reconcile_now(corpus::t0() + Duration::minutes(5));
    let warm_cycle_20_ms = started.elapsed().as_secs_f64() * 1000.0;
    let ingested = scale_plane
        .registry()
        .annotated_live_units("scale")
        .expect("scale live")
        .len();
    rows.push(case(
        "20-source cycle under 250 ms",
        ingested == 60 && warm_cycle_20_ms < 250.0,
        format!(
            "{ingested} units over 20 sources; cold {cold_cycle_20_ms:.1} ms, warm {warm_cycle_20_ms:.1} ms"
        ),
    ));

    C3Report {
        rows,
        transition_sequence: sequence,
        stale_detection_ms,
        disconnect_detection_ms,
        cold_cycle_20_ms,
        warm_cycle_20_ms,
    }
}

// ---------------------------------------------------------------- C4

#[derive(Debug, Clone, Serialize)]
pub struct SoakReport {
    pub sessions: usize,
    pub duration_s: f64,
    pub queries: usize,
    pub queries_per_second: f64,
    pub violations: usize,
    pub simple_latency: LatencyStats,
    pub cross_latency: LatencyStats,
}

/// Concurrency soak: 50 sessions hammer the plane for the given duration;
/// every delivery is validated against the authorization oracle on the
/// requesting thread.
pub fn run_soak(duration: std::time::Duration) -> SoakReport {
    const SESSIONS: usize = 50;
    let governed = Arc::new(GovernedWorld::with_seed(42));
    let manifests = Arc::new(corpus_manifests(&governed));
    let benchmark = Arc::new(governed.corpus.benchmark.clone());
    let violations = Arc::new(AtomicUsize::new(0));
    let started = Instant::now();
    let deadline = started + duration;

    let mut handles = Vec::new();
    for i in 0..SESSIONS {
        let governed = Arc::clone(&governed);
        let manifests = Arc::clone(&manifests);
        let benchmark = Arc::clone(&benchmark);
        let violations = Arc::clone(&violations);
        handles.push(std::thread::spawn(move || {
            let user = governed.corpus.users[i % governed.corpus.users.len()].clone();
            let session = governed.session_for(&user.name);
            let mut rng = ChaCha8Rng::seed_from_u64(0xC4C4 + i as u64);
            let mut simple = Vec::new();
            let mut cross = Vec::new();
            let mut count = 0usize;
            while Instant::now() < deadline {
                let query = benchmark
                    .queries
                    .choose(&mut rng)
                    .expect("benchmark populated");
                let begun = Instant::now();
                let response = governed
                    .plane
                    .request_context(&session, &query.text, None, query_time())
                    .expect("soak query runs");
                let elapsed = begun.elapsed().as_secs_f64() * 1000.0;
                if query.category == "cross" {
                    cross.push(elapsed);
                } else {
                    simple.push(elapsed);
                }
                for unit in &response.units {
                    if !user_may_read(&manifests, &user, &unit.domain, &unit.path) {
                        violations.fetch_add(1, Ordering::Relaxed);
                    }
                }
                count += 1;
            }
            (count, simple, cross)
        }));
    }

    let mut queries = 0;
    let mut simple = Vec::new();
    let mut cross = Vec::new();
    for handle in handles {
        let (count, s, c) = handle.join().expect("soak thread");
        queries += count;
        simple.extend(s);
        cross.extend(c);
    }
    let duration_s = started.elapsed().as_secs_f64();

    SoakReport {
        sessions: SESSIONS,
        duration_s,
        queries,
        queries_per_second: queries as f64 / duration_s,
        violations: violations.load(Ordering::Relaxed),
        simple_latency: LatencyStats::from_millis(&simple),
        cross_latency: LatencyStats::from_millis(&cross),
    }
}

// ---------------------------------------------------------------- C5

#[derive(Debug, Clone, Serialize)]
pub struct C5Report {
    pub cases: Vec<CaseRow>,
}

impl C5Report {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

fn held_approval(
    governed: &GovernedWorld,
    session: &str,
    now: DateTime<Utc>,
) -> (String, String) {
    let outcome = governed
        .plane
        .submit_action(
            session,
            Action {
                operation: "send-external-email".into(),
                domain: "sales".into(),
                path: None,
                body: "weekly digest to the client list".into(),
            },
            now,
        )
        .expect("submission runs");
    let ActionOutcome::Pending(approval) = outcome else {
        panic!("expected the send to be held, got {outcome:?}");
    };
    assert_eq!(approval.tier, Tier::StrongApproval);
    let code = governed
        .plane
        .issued_otp(&approval.id)
        .expect("code issued on the admin side");
    (approval.id, code)
}

/// Approval isolation: eight checks that the out-of-band path is the only
/// way to resolve a strong approval and the code never crosses to the
/// agent side.
pub fn run_c5() -> C5Report {
    let governed = GovernedWorld::with_seed(42);
    let now = query_time();
    let session = governed.session_for("dana");
    let mut cases = Vec::new();
    let mut issued_codes = Vec::new();

    // 1. The code never appears in anything the agent can see, while the
    // admin surface does hold it.
    let (approval_id, code) = held_approval(&governed, &session, now);
    issued_codes.push(code.clone());
    let approval_json = serde_json::to_string(
        &governed.plane.approval(&approval_id, now).expect("approval visible"),
    )
    .expect("approval serializes");
    let context_json = serde_json::to_string(
        &governed
            .plane
            .request_context(&session, "pipeline forecast", None, now)
            .expect("query runs"),
    )
    .expect("response serializes");
    let hidden = !approval_json.contains(&code) && !context_json.contains(&code);
    cases.push(case(
        "code absent from agent-visible responses",
        hidden && code.len() == 6,
        format!("approval and context responses scanned: {} bytes", approval_json.len() + context_json.len()),
    ));

    // 2. 100 wrong codes all rejected; the right one still works after.
    let numeric: u32 = code.parse().expect("numeric code");
    let mut rejected = 0;
    for i in 1..=100u32 {
        let wrong = format!("{:06}", (numeric + i) % 1_000_000);
        if governed
            .plane
            .resolve_strong(&approval_id, &wrong, Channel::OutOfBand, now)
            .is_err()
        {
            rejected += 1;
        }
    }
    let accepted = governed
        .plane
        .resolve_strong(&approval_id, &code, Channel::OutOfBand, now)
        .map(|a| a.status == ApprovalStatus::Approved)
        .unwrap_or(false);
    cases.push(case(
        "wrong codes rejected en masse",
        rejected == 100 && accepted,
        format!("{rejected}/100 rejected; correct code then approved: {accepted}"),
    ));

    // 3. The soft path cannot resolve a strong approval.
    let (strong_id, strong_code) = held_approval(&governed, &session, now);
    issued_codes.push(strong_code.clone());
    let soft = governed.plane.resolve_soft(&strong_id, true, now);
    let soft_blocked = soft.is_err()
        && governed
            .plane
            .approval(&strong_id, now)
            .map(|a| a.status == ApprovalStatus::Pending)
            .unwrap_or(false);
    cases.push(case(
        "strong approval unresolvable via the soft path",
        soft_blocked,
        format!("{soft:?}"),
    ));

    // 4. A consumed code cannot approve twice.
    let replay = governed
        .plane
        .resolve_strong(&approval_id, &code, Channel::OutOfBand, now);
    let replay_blocked = replay.is_err();
    let executions = governed
        .plane
        .audit()
        .events()
        .iter()
        .filter(|e| {
            e.kind == EventKind::ActionExecuted
                && e.detail.get("approval_id") == Some(&approval_id)
        })
        .count();
    cases.push(case(
        "replay rejected",
        replay_blocked && executions == 1,
        format!("second use: {replay:?}; executions recorded: {executions}"),
    ));

    // 5. Codes die after their lifetime.
    let (old_id, old_code) = held_approval(&governed, &session, now);
    issued_codes.push(old_code.clone());
    let late = now + Duration::seconds(301);
    let expired = governed
        .plane
        .resolve_strong(&old_id, &old_code, Channel::OutOfBand, late);
    let expired_ok = matches!(expired, Err(PlaneError::Permission(PermissionError::Expired(_))))
        && governed
            .plane
            .approval(&old_id, late)
            .map(|a| a.status_at(late) == ApprovalStatus::Expired)
            .unwrap_or(false);
    cases.push(case(
        "expired code rejected",
        expired_ok,
        format!("{expired:?}"),
    ));

    // 6. The kill switch blocks later actions and strands open approvals.
    let doomed = governed.session_for("marcus");
    let (doomed_id, doomed_code) = held_approval(&governed, &doomed, now);
    issued_codes.push(doomed_code.clone());
    governed.plane.kill(&KillScope::Session(doomed.clone()), now);
    let post_kill_submit = governed.plane.submit_action(
        &doomed,
        Action {
            operation: "send-external-email".into(),
            domain: "sales".into(),
            path: None,
            body: "post-kill send".into(),
        },
        now,
    );
    let submit_blocked = !matches!(
        post_kill_submit,
        Ok(ActionOutcome::Executed { .. }) | Ok(ActionOutcome::Pending(_))
    );
    let resolve_blocked = governed
        .plane
        .resolve_strong(&doomed_id, &doomed_code, Channel::OutOfBand, now)
        .is_err();
    cases.push(case(
        "kill switch blocks subsequent actions",
        submit_blocked && resolve_blocked,
        format!("submit after kill: {post_kill_submit:?}"),
    ));

    // 7. The agent channel never resolves a strong approval, and the
    // attempt does not burn the code.
    let (chan_id, chan_code) = held_approval(&governed, &session, now);
    issued_codes.push(chan_code.clone());
    let via_agent = governed
        .plane
        .resolve_strong(&chan_id, &chan_code, Channel::Agent, now);
    let agent_blocked = matches!(via_agent, Err(PlaneError::Permission(PermissionError::WrongChannel)));
    let still_works = governed
        .plane
        .resolve_strong(&chan_id, &chan_code, Channel::OutOfBand, now)
        .is_ok();
    cases.push(case(
        "agent channel rejected without consuming the code",
        agent_blocked && still_works,
        format!("agent channel: {via_agent:?}; out-of-band after: {still_works}"),
    ));

    // 8. The audit trail records issuance and resolution but never a code.
    let events = governed.plane.audit().events();
    let issued_events = events.iter().filter(|e| e.kind == EventKind::OtpIssued).count();
    let resolved_events = events
        .iter()
        .filter(|e| e.kind == EventKind::ApprovalResolved)
        .count();
    let log_json = serde_json::to_string(&events).expect("audit serializes");
    let leaked = issued_codes.iter().any(|c| log_json.contains(c.as_str()));
    cases.push(case(
        "audit records ceremonies but no codes",
        issued_events >= 5 && resolved_events >= 2 && !leaked,
        format!("{issued_events} issuances, {resolved_events} resolutions, code in log: {leaked}"),
    ));

    C5Report { cases }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_accuracy_clears_the_floor() {
        let governed = GovernedWorld::with_seed(42);
        let benchmark = governed.corpus.benchmark.clone();
        let report = run_c1(&governed, &benchmark);
        assert!(
            report.accuracy >= 0.55,
            "accuracy {:.3} below floor ({} / {})",
            report.accuracy,
            report.correct,
            report.total
        );
        assert_eq!(report.fuzz_violations, 0);
        assert_eq!(report.fuzz_queries, 1000);
    }

    #[test]
    fn permission_suite_is_clean() {
        let report = run_c2();
        for case in &report.cases {
            assert!(case.passed, "{}: {}", case.name, case.detail);
        }
        assert_eq!(report.cases.len(), 7);
        assert_eq!(report.unauthorized_deliveries, 0);
        assert_eq!(report.false_positives, 0);
        assert_eq!(report.invariant_violations, 0);
    }

    #[test]
    fn freshness_lifecycle_is_observed() {
        let report = run_c3();
        for row in &report.rows {
            assert!(row.passed, "{}: {}", row.name, row.detail);
        }
        assert_eq!(report.rows.len(), 9);
    }

    #[test]
    fn approval_isolation_holds() {
        let report = run_c5();
        for case in &report.cases {
            assert!(case.passed, "{}: {}", case.name, case.detail);
        }
        assert_eq!(report.cases.len(), 8);
    }

    #[test]
    fn short_soak_stays_clean() {
        let report = run_soak(std::time::Duration::from_secs(2));
        assert_eq!(report.violations, 0);
        assert!(report.queries > 0);
        assert_eq!(report.sessions, 50);
    }
}
