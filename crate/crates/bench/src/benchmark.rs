//! The 200-query benchmark: 50 sales, 40 delivery, 30 HR, 30 finance, and
//! 50 cross-domain queries, each with the issuing user, the routing label,
//! and a ground-truth set of relevant unit ids. Includes deliberately
//! ambiguous phrasings (a compensation question in sales vocabulary, a
//! status question about a deal) so rule-based routing stays honest.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SeedFile;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchQuery {
    pub id: u32,
    pub text: String,
    /// Benchmark category: sales, delivery, hr, finance, or cross.
    pub category: String,
    /// Acceptable routing outcomes; classification is correct when the top
    /// domain is any of these (two entries for cross-domain queries).
    pub expected_domains: Vec<String>,
    /// Issuing user; role, home domain, and assignments come from the org.
    pub user: String,
    pub ground_truth: BTreeSet<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Benchmark {
    pub seed: u64,
    pub queries: Vec<BenchQuery>,
}

impl Benchmark {
    pub fn mix(&self) -> Vec<(String, usize)> {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for category in ["sales", "delivery", "hr", "finance", "cross"] {
            let n = self.queries.iter().filter(|q| q.category == category).count();
            counts.push((category.to_owned(), n));
        }
        counts
    }
}

struct Template {
    count: usize,
    category: &'static str,
    expected: &'static [&'static str],
    /// (issuer, client-or-empty) rotation; instances cycle through it.
    issuers: &'static [(&'static str, &'static str)],
    text: fn(client: &str) -> String,
    truth: fn(client: &str) -> Vec<String>,
}

fn id(domain: &str, source: &str, path: &str) -> String {
    ctxplane_core::cxri::unit_id(domain, source, path)
}

fn profile_id(client: &str) -> String {
    id("clients", "records", &format!("{client}/profile.md"))
}

fn status_id(client: &str) -> String {
    id("delivery", "tracker", &format!("{client}-status.md"))
}

fn pipeline() -> String {
    id("sales", "crm", "pipeline.md")
}

fn renewals() -> String {
    id("sales", "crm", "renewals.md")
}

fn pricing() -> String {
    id("sales", "crm", "pricing.md")
}

fn handbook() -> String {
    id("hr", "people", "handbook.md")
}

fn salaries() -> String {
    id("hr", "people", "salaries.md")
}

fn budget() -> String {
    id("finance", "books", "budget.md")
}

fn contacts() -> String {
    id("finance", "books", "contacts.md")
}

fn templates() -> Vec<Template> {
    vec![
        // ---- sales (50) ----
        Template {
            count: 10,
            category: "sales",
            expected: &["sales"],
            issuers: &[("priya", "henderson"), ("marcus", "meridian"), ("dana", "henderson"), ("dana", "meridian")],
            text: |c| format!("what is the renewal outlook for {c} this quarter"),
            truth: |c| vec![renewals(), profile_id(c)],
        },
        Template {
            count: 6,
            category: "sales",
            expected: &["sales"],
            issuers: &[("priya", ""), ("marcus", ""), ("dana", "")],
            text: |_| "summarize the current pipeline and the forecast for the quarter".into(),
            truth: |_| vec![pipeline(), renewals()],
        },
        Template {
            count: 6,
            category: "sales",
            expected: &["sales"],
            issuers: &[("priya", ""), ("marcus", ""), ("dana", "")],
            text: |_| "quota credit and commission target in the renewal tracker".into(),
            truth: |_| vec![renewals()],
        },
        Template {
            count: 6,
            category: "sales",
            expected: &["sales"],
            issuers: &[("dana", "")],
            text: |_| "pricing floor and discount policy for the analytics proposal".into(),
            truth: |_| vec![pricing()],
        },
        Template {
            count: 6,
            category: "sales",
            expected: &["sales"],
            issuers: &[("dana", ""), ("priya", ""), ("marcus", "")],
            text: |_| "which opportunity is in negotiation and what is the win rate".into(),
            truth: |_| vec![pipeline()],
        },
        Template {
            count: 6,
            category: "sales",
            expected: &["sales"],
            issuers: &[("priya", "henderson"), ("marcus", "meridian"), ("dana", "meridian")],
            text: |c| format!("upsell and uplift attached to the {c} renewal deal"),
            truth: |_| vec![renewals()],
        },
        Template {
            count: 6,
            category: "sales",
            expected: &["sales"],
            issuers: &[("dana", ""), ("priya", "")],
            text: |_| "outreach plan for the inbound logistics prospects".into(),
            truth: |_| vec![pipeline()],
        },
        // Deliberately ambiguous: a deal question in status vocabulary.
        Template {
            count: 4,
            category: "sales",
            expected: &["sales"],
            issuers: &[("priya", "henderson"), ("marcus", "meridian")],
            text: |c| format!("status of the {c} deal"),
            truth: |c| vec![pipeline(), status_id(c)],
        },
        // ---- delivery (40) ----
        Template {
            count: 10,
            category: "delivery",
            expected: &["delivery"],
            issuers: &[("elena", "henderson"), ("tomas", "meridian"), ("noel", "henderson"), ("noel", "meridian")],
            text: |c| format!("implementation status and timeline for {c}"),
            truth: |c| vec![status_id(c)],
        },
        Template {
            count: 8,
            category: "delivery",
            expected: &["delivery"],
            issuers: &[("elena", "henderson"), ("tomas", "meridian"), ("noel", "meridian")],
            text: |c| format!("open blockers and risk on the {c} project"),
            truth: |c| vec![status_id(c)],
        },
        Template {
            count: 6,
            category: "delivery",
            expected: &["delivery"],
            issuers: &[("elena", "henderson"), ("tomas", "meridian")],
            text: |c| format!("milestone progress on the {c} workstream"),
            truth: |c| vec![status_id(c)],
        },
        Template {
            count: 6,
            category: "delivery",
            expected: &["delivery"],
            issuers: &[("tomas", ""), ("noel", "")],
            text: |_| "staffing and resourcing for the denver rollout".into(),
            truth: |_| vec![status_id("meridian")],
        },
        Template {
            count: 5,
            category: "delivery",
            expected: &["delivery"],
            issuers: &[("tomas", ""), ("noel", "")],
            text: |_| "schedule for the austin onsite survey and kickoff phase".into(),
            truth: |_| vec![status_id("meridian")],
        },
        Template {
            count: 5,
            category: "delivery",
            expected: &["delivery"],
            issuers: &[("elena", ""), ("noel", "")],
            text: |_| "escalation risk for the october go-live deadline".into(),
            truth: |_| vec![status_id("henderson")],
        },
        // ---- hr (30) ----
        Template {
            count: 5,
            category: "hr",
            expected: &["hr"],
            issuers: &[("aisha", "")],
            text: |_| "when does benefits enrollment open".into(),
            truth: |_| vec![handbook()],
        },
        Template {
            count: 5,
            category: "hr",
            expected: &["hr"],
            issuers: &[("aisha", "")],
            text: |_| "vacation policy and carryover limits".into(),
            truth: |_| vec![handbook()],
        },
        Template {
            count: 5,
            category: "hr",
            expected: &["hr"],
            issuers: &[("aisha", "")],
            text: |_| "compensation bands for the senior consultant role".into(),
            truth: |_| vec![salaries()],
        },
        Template {
            count: 5,
            category: "hr",
            expected: &["hr"],
            issuers: &[("aisha", "")],
            text: |_| "salary review cycle and promotion packets".into(),
            truth: |_| vec![salaries()],
        },
        Template {
            count: 4,
            category: "hr",
            expected: &["hr"],
            issuers: &[("aisha", "")],
            text: |_| "parental leave and holiday policy in the handbook".into(),
            truth: |_| vec![handbook()],
        },
        Template {
            count: 3,
            category: "hr",
            expected: &["hr"],
            issuers: &[("aisha", "")],
            text: |_| "timesheet approval and expense reimbursement policy".into(),
            truth: |_| vec![handbook()],
        },
        // Ambiguous by design: a compensation question in sales vocabulary.
        Template {
            count: 3,
            category: "hr",
            expected: &["hr"],
            issuers: &[("aisha", "")],
            text: |_| "what is the representative base and commission structure".into(),
            truth: |_| vec![salaries()],
        },
        // ---- finance (30) ----
        Template {
            count: 5,
            category: "finance",
            expected: &["finance"],
            issuers: &[("viktor", "")],
            text: |_| "revenue projection and target margin in the annual budget".into(),
            truth: |_| vec![budget()],
        },
        Template {
            count: 5,
            category: "finance",
            expected: &["finance"],
            issuers: &[("viktor", "")],
            text: |_| "quarterly reconciliation and cash flow statement".into(),
            truth: |_| vec![budget()],
        },
        Template {
            count: 5,
            category: "finance",
            expected: &["finance"],
            issuers: &[("viktor", "")],
            text: |_| "who handles invoice disputes on the receivable desk".into(),
            truth: |_| vec![contacts()],
        },
        Template {
            count: 4,
            category: "finance",
            expected: &["finance"],
            issuers: &[("viktor", "")],
            text: |_| "billing contact for the payroll processor".into(),
            truth: |_| vec![contacts()],
        },
        Template {
            count: 4,
            category: "finance",
            expected: &["finance"],
            issuers: &[("viktor", "")],
            text: |_| "procurement spend and the capital plan".into(),
            truth: |_| vec![budget()],
        },
        Template {
            count: 4,
            category: "finance",
            expected: &["finance"],
            issuers: &[("viktor", "")],
            text: |_| "vendor payment routing for rosetta invoices".into(),
            truth: |_| vec![contacts()],
        },
        // Ambiguous by design: finance question that name-drops delivery.
        Template {
            count: 3,
            category: "finance",
            expected: &["finance"],
            issuers: &[("viktor", "")],
            text: |_| "was the procurement freeze lifted for delivery tooling".into(),
            truth: |_| vec![budget()],
        },
        // ---- cross-domain (50) ----
        Template {
            count: 12,
            category: "cross",
            expected: &["sales", "delivery"],
            issuers: &[("priya", "henderson"), ("marcus", "meridian"), ("dana", "henderson"), ("dana", "meridian")],
            text: |c| format!("renewal timeline and delivery status for {c}"),
            truth: |c| vec![renewals(), status_id(c)],
        },
        Template {
            count: 10,
            category: "cross",
            expected: &["clients", "sales"],
            issuers: &[("dana", "henderson"), ("dana", "meridian"), ("grace", "henderson"), ("grace", "meridian")],
            text: |c| format!("account overview and open pipeline for {c}"),
            truth: |c| vec![profile_id(c), pipeline()],
        },
        Template {
            count: 10,
            category: "cross",
            expected: &["clients", "delivery"],
            issuers: &[("grace", "henderson"), ("grace", "meridian"), ("elena", "henderson"), ("tomas", "meridian")],
            text: |c| format!("stakeholder relationship and implementation progress for {c}"),
            truth: |c| vec![profile_id(c), status_id(c)],
        },
        Template {
            count: 8,
            category: "cross",
            expected: &["clients", "finance"],
            issuers: &[("grace", "henderson"), ("grace", "meridian")],
            text: |c| format!("{c} company background and the annual budget projection"),
            truth: |c| vec![profile_id(c), budget()],
        },
        Template {
            count: 10,
            category: "cross",
            expected: &["sales", "finance"],
            issuers: &[("grace", "")],
            text: |_| "renewal revenue outlook and the budget projection".into(),
            truth: |_| vec![renewals(), budget()],
        },
    ]
}

/// Build the benchmark. `files` is passed only to assert every ground-truth
/// id refers to a real corpus unit.
pub fn build_benchmark(seed: u64, files: &[SeedFile]) -> Benchmark {
    let all_ids: BTreeSet<String> = files.iter().map(|f| f.unit_id()).collect();
    let mut queries = Vec::new();
    for template in templates() {
        for index in 0..template.count {
            let (user, client) = template.issuers[index % template.issuers.len()];
            let text = (template.text)(client);
            let truth: BTreeSet<String> = (template.truth)(client).into_iter().collect();
            for unit in &truth {
                assert!(
                    all_ids.contains(unit),
                    "ground-truth unit {unit} missing from the corpus"
                );
            }
            queries.push(BenchQuery {
                id: 0,
                text,
                category: template.category.to_owned(),
                expected_domains: template.expected.iter().map(|d| d.to_string()).collect(),
                user: user.to_owned(),
                ground_truth: truth,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    queries.shuffle(&mut rng);
    for (index, query) in queries.iter_mut().enumerate() {
        query.id = index as u32 + 1;
    }
    Benchmark { seed, queries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::seed_files;

    #[test]
    fn mix_is_exactly_as_declared() {
        let benchmark = build_benchmark(42, &seed_files());
        assert_eq!(benchmark.queries.len(), 200);
        let mix = benchmark.mix();
        assert_eq!(
            mix,
            vec![
                ("sales".to_owned(), 50),
                ("delivery".to_owned(), 40),
                ("hr".to_owned(), 30),
                ("finance".to_owned(), 30),
                ("cross".to_owned(), 50),
            ]
        );
    }

    #[test]
    fn ids_are_sequential_and_generation_is_deterministic() {
        let a = build_benchmark(42, &seed_files());
        let b = build_benchmark(42, &seed_files());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        for (index, query) in a.queries.iter().enumerate() {
            assert_eq!(query.id, index as u32 + 1);
        }
        let c = build_benchmark(7, &seed_files());
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap(),
            "different seeds should shuffle differently"
        );
    }

    #[test]
    fn cross_queries_carry_two_expected_domains() {
        let benchmark = build_benchmark(42, &seed_files());
        for query in &benchmark.queries {
            match query.category.as_str() {
                "cross" => assert_eq!(query.expected_domains.len(), 2),
                _ => assert_eq!(query.expected_domains.len(), 1),
            }
        }
    }
}
