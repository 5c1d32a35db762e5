//! The four governance pipelines compared on the 200-query benchmark, from
//! ungoverned cosine retrieval to the full control plane.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use ctxplane_core::registry::ContextUnit;
use ctxplane_core::router::{Router, Taxonomy};

use crate::attacks::{self, AttackModel};
use crate::benchmark::Benchmark;
use crate::metrics::{Delivered, LatencyStats, RunMetrics};
use crate::world::{GovernedWorld, RawWorld};

const TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Baseline {
    B0,
    B1,
    B2,
    B3,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::B0, Baseline::B1, Baseline::B2, Baseline::B3];

    pub fn label(self) -> &'static str {
        match self {
            Baseline::B0 => "ungoverned",
            Baseline::B1 => "acl_filtered",
            Baseline::B2 => "rbac_aware",
            Baseline::B3 => "full",
        }
    }

    /// The permission model this pipeline brings to the attack scripts.
    pub fn attack_model(self) -> AttackModel {
        match self {
            Baseline::B0 => AttackModel::NoGov,
            Baseline::B1 | Baseline::B2 => AttackModel::Rbac,
            Baseline::B3 => AttackModel::Ck8s,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub baseline: Baseline,
    pub label: &'static str,
    pub metrics: RunMetrics,
    pub leak_pct: f64,
    pub noise_pct: f64,
    pub attacks_blocked: usize,
    pub attacks_total: usize,
    pub latency: LatencyStats,
}

fn describe(unit: &ContextUnit) -> Delivered {
    Delivered {
        unit_id: unit.id.clone(),
        domain: unit.metadata.domain.clone(),
        authorized_roles: unit.authorized_roles.clone(),
    }
}

/// Run all 200 queries through one pipeline and fold in the attack sub-run.
pub fn run_baseline(
    baseline: Baseline,
    governed: &GovernedWorld,
    raw: &RawWorld,
    benchmark: &Benchmark,
) -> BaselineReport {
    let taxonomy =
        Taxonomy::from_json(&governed.corpus.taxonomy_json()).expect("taxonomy parses");
    let router = Router::new(taxonomy);
    let unit_index: BTreeMap<&str, &ContextUnit> =
        raw.units.iter().map(|u| (u.id.as_str(), u)).collect();
    let mut sessions: BTreeMap<String, String> = BTreeMap::new();

    let mut metrics = RunMetrics::default();
    let mut latencies = Vec::with_capacity(benchmark.queries.len());

    for query in &benchmark.queries {
        let user = governed.corpus.user(&query.user);
        let permitted = raw.permitted_domains(&user.home_domain);
        let started = Instant::now();
        let delivered: Vec<Delivered> = match baseline {
            // Cosine top-k over everything; no governance of any kind.
            Baseline::B0 => raw
                .top_k(&raw.all_units(), &query.text, TOP_K)
                .into_iter()
                .map(describe)
                .collect(),
            // B0 plus a post-retrieval ACL filter: drop anything the
            // querying role may not read or that sits outside the home
            // domain's permitted set.
            Baseline::B1 => raw
                .top_k(&raw.all_units(), &query.text, TOP_K)
                .into_iter()
                .map(describe)
                .filter(|d| !crate::metrics::is_leak(d, &user.role, &permitted))
                .collect(),
            // Intent routing plus flat role permissions: candidates come
            // only from routed-and-permitted domains and role-readable
            // units, but there is no agent subset, tiering, freshness, or
            // budget.
            Baseline::B2 => {
                let intent = router.classify(&query.text, &user.home_domain, None);
                let candidates: Vec<&ContextUnit> = raw
                    .units
                    .iter()
                    .filter(|u| {
                        intent.domains.iter().any(|d| d.domain == u.metadata.domain)
                            && permitted.contains(&u.metadata.domain)
                            && u.authorized_roles.contains(&user.role)
                    })
                    .collect();
                raw.top_k(&candidates, &query.text, TOP_K)
                    .into_iter()
                    .map(describe)
                    .collect()
            }
            // The full plane: routing, role + assignment scoping, freshness
            // withholding, ranking, and the token budget.
            Baseline::B3 => {
                let session = sessions
                    .entry(query.user.clone())
                    .or_insert_with(|| governed.session_for(&query.user))
                    .clone();
                let response = governed
                    .plane
                    .request_context(&session, &query.text, None, crate::world::query_time())
                    .unwrap_or_else(|e| panic!("full-pipeline query {}: {e}", query.id));
                response
                    .units
                    .iter()
                    .map(|d| {
                        let unit = unit_index
                            .get(d.id.as_str())
                            .unwrap_or_else(|| panic!("delivered unknown unit {}", d.id));
                        describe(unit)
                    })
                    .collect()
            }
        };
        latencies.push(started.elapsed().as_secs_f64() * 1000.0);
        metrics.record(&delivered, &user.role, &permitted, &query.ground_truth);
    }

    let matrix = attacks::run_attacks(baseline.attack_model(), governed, raw);
    BaselineReport {
        baseline,
        label: baseline.label(),
        leak_pct: metrics.leak_pct(),
        noise_pct: metrics.noise_pct(),
        attacks_blocked: matrix.blocked(),
        attacks_total: matrix.rows.len(),
        latency: LatencyStats::from_millis(&latencies),
        metrics,
    }
}

/// All four pipelines over one corpus, in order.
pub fn run_all(governed: &GovernedWorld, raw: &RawWorld, benchmark: &Benchmark) -> Vec<BaselineReport> {
    Baseline::ALL
        .iter()
        .map(|b| run_baseline(*b, governed, raw, benchmark))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn governance_orderings_hold_on_the_seed_corpus() {
        let governed = GovernedWorld::with_seed(42);
        let raw = RawWorld::load(&governed.corpus);
        let benchmark = governed.corpus.benchmark.clone();
        let reports = run_all(&governed, &raw, &benchmark);
        let by = |b: Baseline| reports.iter().find(|r| r.baseline == b).unwrap();

        assert!(by(Baseline::B0).metrics.leaks > 0, "ungoverned retrieval must leak");
        assert_eq!(by(Baseline::B1).metrics.leaks, 0, "ACL filter eliminates leaks");
        assert_eq!(by(Baseline::B2).metrics.leaks, 0);
        assert_eq!(by(Baseline::B3).metrics.leaks, 0);
        assert!(by(Baseline::B2).noise_pct <= by(Baseline::B0).noise_pct);
        assert!(by(Baseline::B3).noise_pct <= by(Baseline::B2).noise_pct);
        assert!(
            by(Baseline::B0).noise_pct - by(Baseline::B3).noise_pct >= 10.0,
            "full pipeline should cut noise by ≥10 points: B0 {:.1} vs B3 {:.1}",
            by(Baseline::B0).noise_pct,
            by(Baseline::B3).noise_pct
        );
        assert_eq!(
            reports.iter().map(|r| r.attacks_blocked).collect::<Vec<_>>(),
            vec![0, 4, 4, 5]
        );
    }

    #[test]
    fn reports_are_deterministic_for_a_seed() {
        let governed = GovernedWorld::with_seed(7);
        let raw = RawWorld::load(&governed.corpus);
        let benchmark = governed.corpus.benchmark.clone();
        let first = run_baseline(Baseline::B2, &governed, &raw, &benchmark);
        let second = run_baseline(Baseline::B2, &governed, &raw, &benchmark);
        assert_eq!(
            serde_json::to_value(&first.metrics).unwrap(),
            serde_json::to_value(&second.metrics).unwrap()
        );
    }
}
