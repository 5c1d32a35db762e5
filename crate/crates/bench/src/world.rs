//! Shared experiment fixtures: the fully governed control plane built from
//! a seed corpus, and a raw in-memory retrieval substrate (units + fitted
//! vectors, no governance) that the weaker baselines are layered on.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use tempfile::TempDir;

use ctxplane_core::cxri::IngestPolicy;
use ctxplane_core::manifest::{parse_manifest, CrossDomainMode, DomainManifest};
use ctxplane_core::permissions::{AgentProfile, Tier, UserRole};
use ctxplane_core::plane::ContextPlane;
use ctxplane_core::registry::{ContextUnit, UnitMetadata, UnitType};
use ctxplane_core::router::Taxonomy;
use ctxplane_core::vector::{cosine, Vectorizer};

use crate::corpus::{self, SeedCorpus, DOMAINS};

/// Role → operation tiers for the seed org. The agent profiles below are
/// strict subsets of these.
pub fn org_roles() -> Vec<UserRole> {
    let role = |name: &str, ops: &[(&str, Tier)]| UserRole {
        name: name.into(),
        operations: ops.iter().map(|(op, t)| (op.to_string(), *t)).collect(),
    };
    use Tier::*;
    vec![
        role("sales-rep", &[("read", Autonomous), ("send-external-email", SoftApproval), ("export-report", SoftApproval)]),
        role("sales-manager", &[("read", Autonomous), ("write", SoftApproval), ("send-external-email", SoftApproval), ("sign-contract", StrongApproval)]),
        role("delivery-lead", &[("read", Autonomous), ("write", SoftApproval), ("export-report", SoftApproval)]),
        role("delivery-consultant", &[("read", Autonomous), ("export-report", SoftApproval)]),
        role("hr-manager", &[("read", Autonomous), ("write", SoftApproval), ("export-report", SoftApproval)]),
        role("finance-analyst", &[("read", Autonomous), ("write", SoftApproval), ("export-report", SoftApproval)]),
        role("partner", &[("read", Autonomous), ("write", SoftApproval), ("send-external-email", SoftApproval), ("sign-contract", StrongApproval)]),
        role("ops-admin", &[("read", Autonomous), ("export-report", SoftApproval)]),
    ]
}

pub fn org_profiles() -> Vec<AgentProfile> {
    let profile = |name: &str, user_role: &str, ops: &[(&str, Tier)]| AgentProfile {
        name: name.into(),
        user_role: user_role.into(),
        operations: ops.iter().map(|(op, t)| (op.to_string(), *t)).collect(),
    };
    use Tier::*;
    vec![
        profile("rep-agent", "sales-rep", &[("read", Autonomous), ("send-external-email", SoftApproval)]),
        profile("mgr-agent", "sales-manager", &[("read", Autonomous), ("write", SoftApproval), ("send-external-email", SoftApproval)]),
        profile("lead-agent", "delivery-lead", &[("read", Autonomous), ("write", SoftApproval)]),
        profile("consultant-agent", "delivery-consultant", &[("read", Autonomous)]),
        profile("hr-agent", "hr-manager", &[("read", Autonomous), ("write", SoftApproval)]),
        profile("finance-agent", "finance-analyst", &[("read", Autonomous), ("write", SoftApproval)]),
        profile("partner-agent", "partner", &[("read", Autonomous), ("send-external-email", SoftApproval)]),
        profile("ops-agent", "ops-admin", &[("read", Autonomous)]),
    ]
}

/// Operations a role holds at all, regardless of tier — what a flat RBAC
/// check consults.
pub fn role_operations(role: &str) -> BTreeSet<String> {
    org_roles()
        .into_iter()
        .find(|r| r.name == role)
        .map(|r| r.operations.keys().cloned().collect())
        .unwrap_or_default()
}

/// The moment queries run: one hour after the first reconcile, with the
/// whole corpus still fresh.
pub fn query_time() -> DateTime<Utc> {
    corpus::t0() + Duration::hours(1)
}

/// A complete control plane loaded with the seed corpus.
pub struct GovernedWorld {
    pub corpus: SeedCorpus,
    pub plane: Arc<ContextPlane>,
    /// Keeps a generated corpus directory alive for the world's lifetime.
    _dir: Option<TempDir>,
}

impl GovernedWorld {
    /// Generate a corpus into a fresh temp directory and stand the plane up
    /// on it: manifests applied, roles and delegations registered, sources
    /// reconciled at the epoch, vectors fitted.
    pub fn with_seed(seed: u64) -> GovernedWorld {
        let dir = TempDir::new().expect("temp dir");
        let corpus = corpus::generate_seed(seed, dir.path()).expect("corpus generates");
        Self::from_corpus(corpus, Some(dir))
    }

    pub fn from_corpus(corpus: SeedCorpus, dir: Option<TempDir>) -> GovernedWorld {
        let taxonomy = Taxonomy::from_json(&corpus.taxonomy_json()).expect("taxonomy parses");
        let plane = Arc::new(ContextPlane::new(taxonomy));
        for role in org_roles() {
            plane.register_role(role).expect("role registers");
        }
        for profile in org_profiles() {
            plane.register_profile(profile).expect("profile registers");
        }
        for domain in DOMAINS {
            plane
                .apply_manifest(&corpus.manifest_yaml(domain))
                .unwrap_or_else(|e| panic!("seed manifest {domain} applies: {e}"));
        }
        plane.reconcile_now(corpus::t0());
        plane.refit_vectors();
        GovernedWorld {
            corpus,
            plane,
            _dir: dir,
        }
    }

    /// Create a session for a seed-org user, homed per the org chart.
    pub fn session_for(&self, user: &str) -> String {
        let entry = self.corpus.user(user);
        self.plane
            .create_session(
                &entry.name,
                &entry.role,
                &entry.agent,
                &entry.home_domain,
                entry.assigned.clone(),
                corpus::t0(),
            )
            .unwrap_or_else(|e| panic!("session for {user}: {e}"))
            .id
    }
}

/// All corpus units loaded straight off disk with a corpus-fitted
/// vectorizer — the substrate for the ungoverned and partially governed
/// pipelines. No permission, freshness, or budget machinery.
pub struct RawWorld {
    pub units: Vec<ContextUnit>,
    pub vectorizer: Vectorizer,
    pub manifests: BTreeMap<String, DomainManifest>,
}

impl RawWorld {
    pub fn load(corpus: &SeedCorpus) -> RawWorld {
        let mut manifests = BTreeMap::new();
        for domain in DOMAINS {
            let manifest =
                parse_manifest(&corpus.manifest_yaml(domain)).expect("seed manifest parses");
            manifests.insert(domain.to_string(), manifest);
        }
        let vectorizer = Vectorizer::fit(corpus.files.iter().map(|f| f.content));
        let units = corpus
            .files
            .iter()
            .map(|file| {
                let policy = IngestPolicy::from_manifest(&manifests[file.domain]);
                ContextUnit {
                    id: file.unit_id(),
                    content: file.content.to_owned(),
                    unit_type: UnitType::Unstructured,
                    metadata: UnitMetadata {
                        author: file.author.to_owned(),
                        timestamp: file.timestamp(),
                        domain: file.domain.to_owned(),
                        sensitivity: file.sensitivity,
                        entities: file.entities.iter().map(|e| e.to_string()).collect(),
                        source: file.source.to_owned(),
                        path: file.path.to_owned(),
                        authority: file.authority,
                    },
                    version: 1,
                    vector: vectorizer.embed(file.content),
                    authorized_roles: policy.roles_for(file.path),
                }
            })
            .collect();
        RawWorld {
            units,
            vectorizer,
            manifests,
        }
    }

    /// Cosine top-k over an arbitrary candidate slice; ties break on path
    /// for determinism.
    pub fn top_k<'a>(&self, candidates: &[&'a ContextUnit], query: &str, k: usize) -> Vec<&'a ContextUnit> {
        let query_vector = self.vectorizer.embed(query);
        let mut scored: Vec<(&ContextUnit, f64)> = candidates
            .iter()
            .map(|u| (*u, cosine(&query_vector, &u.vector)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.id.cmp(&b.0.id))
        });
        scored.into_iter().take(k).map(|(u, _)| u).collect()
    }

    pub fn all_units(&self) -> Vec<&ContextUnit> {
        self.units.iter().collect()
    }

    /// Home domain plus every domain the home manifest brokers.
    pub fn permitted_domains(&self, home: &str) -> BTreeSet<String> {
        let mut permitted = BTreeSet::from([home.to_owned()]);
        if let Some(manifest) = self.manifests.get(home) {
            for domain in DOMAINS {
                if manifest.access().cross_domain_mode(domain) == Some(CrossDomainMode::Brokered) {
                    permitted.insert(domain.to_string());
                }
            }
        }
        permitted
    }
}
