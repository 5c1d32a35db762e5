//! Freshness-fault scenarios: the same four realistic faults — a churned
//! client, a terminated vendor contact, a contradictory status pair, and an
//! outdated pricing sheet — run once against a frozen retrieval snapshot
//! and once against the reconciling plane.

use std::fs;

use chrono::Duration;
use serde::Serialize;

use ctxplane_core::registry::FreshnessState;
use ctxplane_core::registry::ContextUnit;

use crate::corpus::{self, CONFLICT_FIXTURE};
use crate::world::{GovernedWorld, RawWorld};

const TOP_K: usize = 5;

/// The four scenario queries, aimed at the four planted faults.
const QUERIES: [(&str, &str); 4] = [
    ("churned client", "current status of the sierra relationship"),
    ("terminated contact", "who is our staffing vendor contact"),
    ("contradictory status", "is the henderson rollout on track"),
    ("outdated pricing", "standard pricing for enterprise engagements"),
];

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRow {
    pub scenario: &'static str,
    pub query: &'static str,
    pub delivered: usize,
    pub observation: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FreshnessReport {
    pub with_reconciliation: bool,
    /// How many of the four queries delivered content whose backing file
    /// was deleted.
    pub phantom_served: usize,
    pub contradiction_co_delivered: bool,
    pub conflict_resolved_to_newest: bool,
    pub stale_flagged: bool,
    pub rows: Vec<ScenarioRow>,
}

struct FaultedWorld {
    governed: GovernedWorld,
    raw: RawWorld,
    sierra_id: String,
    contacts_id: String,
    status_id: String,
    pricing_id: String,
    conflict_body: String,
}

/// Build the corpus, capture the frozen snapshot, then plant all four
/// faults: two deletions on disk, one conflicting status version in the
/// registry, and the pricing sheet left to age past its window.
fn faulted_world() -> FaultedWorld {
    let governed = GovernedWorld::with_seed(42);
    let raw = RawWorld::load(&governed.corpus);

    let file_id = |path: &str| {
        governed
            .corpus
            .files
            .iter()
            .find(|f| f.path == path)
            .map(|f| f.unit_id())
            .unwrap_or_else(|| panic!("corpus file {path}"))
    };
    let sierra_id = file_id("sierra/profile.md");
    let contacts_id = file_id("contacts.md");
    let status_id = file_id("henderson-status.md");
    let pricing_id = file_id("pricing.md");

    let root = &governed.corpus.root;
    fs::remove_file(root.join("data/clients/sierra/profile.md"))
        .expect("churned client file removed");
    fs::remove_file(root.join("data/finance/contacts.md"))
        .expect("terminated contact file removed");

    let conflict_body =
        fs::read_to_string(root.join(CONFLICT_FIXTURE)).expect("conflict fixture readable");
    let registry = governed.plane.registry();
    let original: ContextUnit = registry
        .annotated_live_units("delivery")
        .expect("delivery domain live")
        .into_iter()
        .map(|a| a.unit)
        .find(|u| u.id == status_id)
        .expect("status unit ingested");
    let mut conflict = original.clone();
    conflict.content = conflict_body.clone();
    conflict.metadata.timestamp = original.metadata.timestamp + Duration::hours(2);
    conflict.metadata.author = "elena".into();
    registry
        .upsert_unit_retaining_live(conflict)
        .expect("conflicting version lands");

    FaultedWorld {
        governed,
        raw,
        sierra_id,
        contacts_id,
        status_id,
        pricing_id,
        conflict_body,
    }
}

/// Run the four queries against a frozen snapshot or the reconciling
/// plane and report what each fault did to the deliveries.
pub fn run_freshness_scenarios(with_reconciliation: bool) -> FreshnessReport {
    let world = faulted_world();
    // Every unit was verified at ingest. Eighty hours on, pricing's 72 h
    // window has lapsed (without reaching the expiry point at twice the
    // window) while every other window — 168 h or 336 h — still holds.
    let query_time = corpus::t0() + Duration::hours(80);

    let mut phantom_served = 0;
    let mut contradiction_co_delivered = false;
    let mut conflict_resolved_to_newest = false;
    let mut stale_flagged = false;
    let mut rows = Vec::new();

    if !with_reconciliation {
        // Frozen snapshot: the index built at ingest time, never re-synced.
        // The deleted files are still in it, and the conflicting status
        // version sits beside the original as just another document.
        let mut snapshot: Vec<ContextUnit> = world.raw.units.clone();
        let mut conflict_doc = snapshot
            .iter()
            .find(|u| u.id == world.status_id)
            .expect("status in snapshot")
            .clone();
        conflict_doc.content = world.conflict_body.clone();
        conflict_doc.vector = world.raw.vectorizer.embed(&world.conflict_body);
        snapshot.push(conflict_doc);

        for (scenario, query) in QUERIES {
            let refs: Vec<&ContextUnit> = snapshot.iter().collect();
            let delivered = world.raw.top_k(&refs, query, TOP_K);
            let observation = match scenario {
                "churned client" | "terminated contact" => {
                    let phantom_id = if scenario == "churned client" {
                        &world.sierra_id
                    } else {
                        &world.contacts_id
                    };
                    let hit = delivered.iter().any(|u| &u.id == phantom_id);
                    if hit {
                        phantom_served += 1;
                        "deleted file still served from the snapshot".to_string()
                    } else {
                        "deleted file absent from top results".to_string()
                    }
                }
                "contradictory status" => {
                    let versions: Vec<&str> = delivered
                        .iter()
                        .filter(|u| u.id == world.status_id)
                        .map(|u| u.content.as_str())
                        .collect();
                    let both = versions.iter().any(|c| c.contains("on track"))
                        && versions.iter().any(|c| c.contains("at risk"));
                    contradiction_co_delivered |= both;
                    format!("{} versions of the status delivered together", versions.len())
                }
                _ => {
                    let served = delivered.iter().any(|u| u.id == world.pricing_id);
                    format!("outdated pricing served without any flag: {served}")
                }
            };
            rows.push(ScenarioRow {
                scenario,
                query,
                delivered: delivered.len(),
                observation,
            });
        }
    } else {
        // The plane reconciles before serving: deletions archive their
        // units, the conflicted slot collapses to the newest version, and
        // the aged pricing sheet is delivered flagged.
        world.governed.plane.reconcile_now(query_time);
        let session = world.governed.session_for("grace");
        for (scenario, query) in QUERIES {
            let response = world
                .governed
                .plane
                .request_context(&session, query, None, query_time)
                .expect("scenario query runs");
            let observation = match scenario {
                "churned client" | "terminated contact" => {
                    let phantom_id = if scenario == "churned client" {
                        &world.sierra_id
                    } else {
                        &world.contacts_id
                    };
                    let hit = response.units.iter().any(|u| &u.id == phantom_id);
                    if hit {
                        phantom_served += 1;
                        "deleted file leaked through reconciliation".to_string()
                    } else {
                        "deleted file archived; nothing phantom served".to_string()
                    }
                }
                "contradictory status" => {
                    let versions: Vec<&str> = response
                        .units
                        .iter()
                        .filter(|u| u.id == world.status_id)
                        .map(|u| u.content.as_str())
                        .collect();
                    let newest_only =
                        versions.len() == 1 && versions[0].contains("at risk");
                    conflict_resolved_to_newest |= newest_only;
                    contradiction_co_delivered |= versions.len() > 1;
                    format!(
                        "{} status version(s) delivered; newest-wins: {newest_only}",
                        versions.len()
                    )
                }
                _ => {
                    let pricing = response
                        .units
                        .iter()
                        .find(|u| u.id == world.pricing_id);
                    match pricing {
                        Some(unit) => {
                            let flagged = unit.freshness == FreshnessState::Stale;
                            stale_flagged |= flagged;
                            format!("pricing delivered with freshness {:?}", unit.freshness)
                        }
                        None => "pricing not delivered".to_string(),
                    }
                }
            };
            rows.push(ScenarioRow {
                scenario,
                query,
                delivered: response.units.len(),
                observation,
            });
        }
    }

    FreshnessReport {
        with_reconciliation,
        phantom_served,
        contradiction_co_delivered,
        conflict_resolved_to_newest,
        stale_flagged,
        rows,
    }
}
