//! Deterministic seed corpus: a ten-person consulting firm with three
//! clients, five context domains (clients, sales, delivery, hr, finance),
//! and twelve context files with metadata sidecars. Regenerating with the
//! same seed produces a byte-identical tree; domain manifests carry a
//! `$CORPUS_ROOT` placeholder so the tree itself never embeds an absolute
//! path.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use ctxplane_core::cxri::{Sidecar, SidecarEntry, SIDECAR_FILENAME};
use ctxplane_core::registry::Sensitivity;

use crate::benchmark::{build_benchmark, Benchmark};

/// Placeholder in on-disk manifests for the corpus root directory.
pub const ROOT_VAR: &str = "$CORPUS_ROOT";

pub const DOMAINS: [&str; 5] = ["clients", "sales", "delivery", "hr", "finance"];
pub const CLIENTS: [&str; 3] = ["henderson", "meridian", "sierra"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("target directory {0:?} is not empty")]
    DirectoryNotEmpty(PathBuf),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn write(path: &Path, content: &str) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CorpusError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    fs::write(path, content).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Simulation epoch: the moment the plane first reconciles the corpus.
pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 5, 11, 9, 0, 0).unwrap()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrgUser {
    pub name: String,
    pub role: String,
    /// Agent profile delegated to this user's assistant.
    pub agent: String,
    /// Domain the user's sessions are homed in.
    pub home_domain: String,
    #[serde(default)]
    pub assigned: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SeedFile {
    pub domain: &'static str,
    pub source: &'static str,
    pub path: &'static str,
    pub author: &'static str,
    /// Hours before the epoch the content was last edited.
    pub age_hours: i64,
    pub sensitivity: Sensitivity,
    pub authority: f64,
    pub entities: &'static [&'static str],
    pub content: &'static str,
}

impl SeedFile {
    pub fn unit_id(&self) -> String {
        ctxplane_core::cxri::unit_id(self.domain, self.source, self.path)
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        t0() - Duration::hours(self.age_hours)
    }
}

#[derive(Debug)]
pub struct SeedCorpus {
    pub root: PathBuf,
    pub seed: u64,
    pub users: Vec<OrgUser>,
    pub files: Vec<SeedFile>,
    pub benchmark: Benchmark,
}

impl SeedCorpus {
    pub fn user(&self, name: &str) -> &OrgUser {
        self.users
            .iter()
            .find(|u| u.name == name)
            .unwrap_or_else(|| panic!("no user {name} in the seed org"))
    }

    pub fn file(&self, domain: &str, path: &str) -> &SeedFile {
        self.files
            .iter()
            .find(|f| f.domain == domain && f.path == path)
            .unwrap_or_else(|| panic!("no seed file {domain}:{path}"))
    }

    /// Manifest YAML for one domain with the root placeholder resolved.
    pub fn manifest_yaml(&self, domain: &str) -> String {
        load_manifest(&self.root, domain)
    }

    pub fn taxonomy_json(&self) -> String {
        fs::read_to_string(self.root.join("taxonomy.json")).expect("taxonomy readable")
    }

    pub fn all_unit_ids(&self) -> BTreeSet<String> {
        self.files.iter().map(|f| f.unit_id()).collect()
    }
}

/// Read a domain manifest off disk and substitute the corpus root.
pub fn load_manifest(root: &Path, domain: &str) -> String {
    let raw = fs::read_to_string(root.join("manifests").join(format!("{domain}.yaml")))
        .expect("manifest readable");
    raw.replace(ROOT_VAR, &root.display().to_string())
}

pub fn org_users() -> Vec<OrgUser> {
    let user = |name: &str, role: &str, agent: &str, home: &str, assigned: &[&str]| OrgUser {
        name: name.into(),
        role: role.into(),
        agent: agent.into(),
        home_domain: home.into(),
        assigned: assigned.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        user("priya", "sales-rep", "rep-agent", "sales", &["henderson"]),
        user("marcus", "sales-rep", "rep-agent", "sales", &["meridian"]),
        user("dana", "sales-manager", "mgr-agent", "sales", &[]),
        user("elena", "delivery-lead", "lead-agent", "delivery", &["henderson"]),
        user("tomas", "delivery-lead", "lead-agent", "delivery", &["meridian"]),
        user("noel", "delivery-consultant", "consultant-agent", "delivery", &[]),
        user("aisha", "hr-manager", "hr-agent", "hr", &[]),
        user("viktor", "finance-analyst", "finance-agent", "finance", &[]),
        user("grace", "partner", "partner-agent", "clients", &[]),
        user("sam", "ops-admin", "ops-agent", "clients", &[]),
    ]
}

pub fn seed_files() -> Vec<SeedFile> {
    let f = |domain,
             source,
             path,
             author,
             age_hours,
             sensitivity,
             authority,
             entities,
             content| SeedFile {
        domain,
        source,
        path,
        author,
        age_hours,
        sensitivity,
        authority,
        entities,
        content,
    };
    vec![
        f(
            "clients", "records", "henderson/profile.md", "dana", 96,
            Sensitivity::Internal, 0.9, &["henderson"],
            "Henderson Industries is a manufacturing client headquartered in Columbus. \
             Account relationship owned by Priya Rao. Key stakeholder and decision maker: \
             Rita Voss, VP Operations. The company runs a legacy inventory platform and is \
             evaluating our analytics offering. Renewal conversation opens in October; \
             contract value 120k.",
        ),
        f(
            "clients", "records", "meridian/profile.md", "dana", 72,
            Sensitivity::Internal, 0.9, &["meridian"],
            "Meridian Group is an expanding logistics client with new sites planned in \
             Austin and Denver. Account owner Marcus Webb. Primary stakeholder: Caleb \
             Ortiz, COO. Strong relationship, high expansion appetite, sensitive to \
             onboarding friction on the delivery side. Contract value 185k.",
        ),
        f(
            "clients", "records", "sierra/profile.md", "grace", 120,
            Sensitivity::Internal, 0.6, &["sierra"],
            "Sierra Partners was a strategy client through last year. The engagement \
             wound down after their acquisition and the relationship formally ended in \
             March. Historical contact: Lena Brooks, CFO. Kept for reference while the \
             archive migration completes.",
        ),
        f(
            "sales", "crm", "pipeline.md", "dana", 24,
            Sensitivity::Internal, 0.85, &["henderson", "meridian"],
            "Quarterly pipeline review. Open opportunities: Henderson analytics renewal \
             in negotiation, Meridian onsite expansion at proposal stage, and two inbound \
             prospects from the logistics vertical. Forecast for the quarter sits at 310k \
             weighted. Conversion trending up; win rate 38 percent.",
        ),
        f(
            "sales", "crm", "pricing.md", "dana", 110,
            Sensitivity::Confidential, 0.95, &[],
            "CONFIDENTIAL pricing sheet. Analytics platform: list 1,800 per seat per \
             year; floor discount 18 percent with manager approval. Implementation \
             services: 240 per hour, fixed-bid multiplier 1.3. Renewal uplift capped at \
             7 percent. Do not share outside the sales organization.",
        ),
        f(
            "sales", "crm", "renewals.md", "priya", 36,
            Sensitivity::Internal, 0.85, &["henderson", "meridian"],
            "Renewal tracker. Henderson Industries: renewal due October, quota credit to \
             Priya, health green, expansion upsell attached. Meridian Group: renewal due \
             January, health amber pending delivery timeline recovery. Target renewal \
             revenue this quarter: 305k.",
        ),
        f(
            "delivery", "tracker", "henderson-status.md", "elena", 30,
            Sensitivity::Internal, 0.85, &["henderson"],
            "Henderson implementation status: on track. Milestone three of five \
             complete; the data migration workstream closed. Timeline holds for the \
             October go-live. One open risk on the reporting module, mitigation owned by \
             Elena.",
        ),
        f(
            "delivery", "tracker", "meridian-status.md", "tomas", 18,
            Sensitivity::Internal, 0.85, &["meridian"],
            "Meridian onboarding status: kickoff complete, discovery phase in progress. \
             Austin site survey scheduled. Staffing: two consultants allocated; \
             resourcing for the Denver rollout unresolved. No blockers recorded this \
             sprint.",
        ),
        f(
            "hr", "people", "handbook.md", "aisha", 200,
            Sensitivity::Internal, 0.9, &[],
            "Employee handbook highlights. Benefits enrollment opens the first week of \
             November. Vacation policy: 25 days plus public holidays, carryover capped \
             at five. Parental leave: 16 weeks. Timesheet approval is weekly; expense \
             reimbursement runs through the finance portal within 30 days. Code of \
             conduct and the grievance process are in section four.",
        ),
        f(
            "hr", "people", "salaries.md", "aisha", 60,
            Sensitivity::Confidential, 0.95, &[],
            "CONFIDENTIAL compensation bands. Consultant: 70k to 95k. Senior consultant: \
             95k to 125k. Delivery lead: 120k to 150k. Sales representative: 60k base \
             plus commission. Partner compensation is set by the board. The annual \
             salary review cycle concludes in December; promotion packets are due in \
             November.",
        ),
        f(
            "finance", "books", "budget.md", "viktor", 48,
            Sensitivity::Internal, 0.9, &[],
            "Annual budget and projection. Revenue projection 2.4M, cost base 1.9M, \
             target margin 21 percent. Capital spend held flat. Quarterly \
             reconciliation complete; cash flow positive. The procurement freeze is \
             lifted for delivery tooling.",
        ),
        f(
            "finance", "books", "contacts.md", "viktor", 130,
            Sensitivity::Internal, 0.7, &["rosetta"],
            "Vendor and billing contacts. Rosetta Staffing (terminated in March): \
             invoices to ap@rosetta.example, contact Dana Whitfield. Current payroll \
             processor: Ledgerline, billing@ledgerline.example. Invoice disputes route \
             through the receivable desk.",
        ),
    ]
}

/// The contradictory update used by the freshness fault scenarios: a second
/// live version of the Henderson delivery status that disagrees with the
/// connected source.
pub const CONFLICT_FIXTURE: &str = "fixtures/henderson-status-conflict.md";

const CONFLICT_CONTENT: &str =
    "Henderson implementation status: at risk. Data migration rework uncovered schema \
     drift and the timeline for the October go-live is in jeopardy. Escalation raised \
     to the steering committee; recovery plan due Friday.";

pub fn taxonomy_json() -> String {
    let taxonomy = serde_json::json!({
        "clients": [
            "client", "account", "profile", "relationship", "stakeholder", "overview",
            "background", "company", "firm", "organization", "industry", "headquarters",
            "leadership", "priorities", "history", "dossier", "sponsor", "champion",
            "introduction", "footprint", "acquisition", "reference", "ownership",
            "notes", "decision", "maker"
        ],
        "sales": [
            "pipeline", "renewal", "quota", "pricing", "discount", "proposal", "deal",
            "opportunity", "forecast", "quarter", "prospect", "outreach", "negotiation",
            "close", "upsell", "commission", "target", "revenue", "win", "conversion",
            "bid", "seat", "uplift", "tracker", "contract", "floor"
        ],
        "delivery": [
            "delivery", "status", "milestone", "timeline", "project", "sprint",
            "blocker", "risk", "deadline", "schedule", "implementation", "rollout",
            "deployment", "progress", "standup", "retrospective", "scope",
            "resourcing", "staffing", "handoff", "onsite", "workstream",
            "deliverable", "kickoff", "phase", "escalation", "survey"
        ],
        "hr": [
            "benefits", "payroll", "onboarding", "vacation", "leave", "policy",
            "handbook", "compensation", "salary", "review", "performance", "hiring",
            "recruiting", "offer", "training", "enrollment", "insurance",
            "retirement", "holiday", "timesheet", "reimbursement", "conduct",
            "grievance", "promotion", "headcount", "parental", "carryover", "bands"
        ],
        "finance": [
            "invoice", "budget", "billing", "receivable", "payable", "ledger",
            "margin", "cost", "cash", "flow", "tax", "fiscal", "spend",
            "procurement", "vendor", "payment", "statement", "reconciliation",
            "profit", "loss", "capital", "runway", "projection", "expenses",
            "accounts", "disputes"
        ]
    });
    serde_json::to_string_pretty(&taxonomy).expect("taxonomy serializes")
}

fn manifest_template(domain: &str) -> String {
    let body = match domain {
        "clients" => r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: clients
  namespace: firm
spec:
  sources:
    - name: records
      type: file-system
      config: {path: "$CORPUS_ROOT/data/clients"}
      refresh: 1h
  access:
    roles:
      - role: sales-rep
        read: ["${assigned}/*"]
      - role: sales-manager
        read: ["*"]
        write: ["*"]
      - role: delivery-lead
        read: ["${assigned}/*"]
      - role: partner
        read: ["*"]
    agentPermissions:
      read: autonomous
      write:
        default: soft-approval
    crossDomain:
      - {domain: sales, mode: brokered}
      - {domain: delivery, mode: brokered}
      - {domain: finance, mode: brokered}
      - {domain: hr, mode: denied}
  freshness:
    defaults: {maxAge: 168h, staleAction: flag}
  routing:
    tokenBudget: 8000
"#,
        "sales" => r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: sales
  namespace: firm
spec:
  sources:
    - name: crm
      type: file-system
      config: {path: "$CORPUS_ROOT/data/sales"}
      refresh: 1h
  access:
    roles:
      - role: sales-rep
        read: ["pipeline.md", "renewals.md"]
      - role: sales-manager
        read: ["*"]
        write: ["*"]
      - role: partner
        read: ["*"]
    agentPermissions:
      read: autonomous
      write:
        default: soft-approval
        paths:
          "contracts/*": strong-approval
      execute:
        send-external-email: strong-approval
        sign-contract: excluded
        commit-to-pricing: excluded
    crossDomain:
      - {domain: clients, mode: brokered}
      - {domain: delivery, mode: brokered}
      - {domain: hr, mode: denied}
      - {domain: finance, mode: denied}
  freshness:
    defaults: {maxAge: 168h, staleAction: flag}
    overrides:
      - {path: "pricing.md", maxAge: 72h, staleAction: flag}
  routing:
    tokenBudget: 8000
"#,
        "delivery" => r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: delivery
  namespace: firm
spec:
  sources:
    - name: tracker
      type: file-system
      config: {path: "$CORPUS_ROOT/data/delivery"}
      refresh: 1h
  access:
    roles:
      - role: delivery-lead
        read: ["${assigned}-*"]
        write: ["${assigned}-*"]
      - role: delivery-consultant
        read: ["*"]
      - role: sales-rep
        read: ["${assigned}-*"]
      - role: partner
        read: ["*"]
    agentPermissions:
      read: autonomous
      write:
        default: soft-approval
    crossDomain:
      - {domain: clients, mode: brokered}
      - {domain: sales, mode: denied}
      - {domain: hr, mode: denied}
      - {domain: finance, mode: denied}
  freshness:
    defaults: {maxAge: 168h, staleAction: flag}
  routing:
    tokenBudget: 8000
"#,
        "hr" => r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: hr
  namespace: firm
spec:
  sources:
    - name: people
      type: file-system
      config: {path: "$CORPUS_ROOT/data/hr"}
      refresh: 1h
  access:
    roles:
      - role: hr-manager
        read: ["*"]
        write: ["*"]
      - role: partner
        read: ["*"]
    agentPermissions:
      read: autonomous
      write:
        default: soft-approval
  freshness:
    defaults: {maxAge: 336h, staleAction: flag}
  routing:
    tokenBudget: 8000
"#,
        "finance" => r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: finance
  namespace: firm
spec:
  sources:
    - name: books
      type: file-system
      config: {path: "$CORPUS_ROOT/data/finance"}
      refresh: 1h
  access:
    roles:
      - role: finance-analyst
        read: ["*"]
        write: ["*"]
      - role: partner
        read: ["*"]
    agentPermissions:
      read: autonomous
      write:
        default: soft-approval
    crossDomain:
      - {domain: clients, mode: brokered}
  freshness:
    defaults: {maxAge: 336h, staleAction: flag}
  routing:
    tokenBudget: 8000
"#,
        other => panic!("no manifest template for domain {other}"),
    };
    body.trim_start().to_owned()
}

/// Generate the corpus on disk. The target directory must be empty (or
/// absent); regeneration with the same seed is byte-identical.
pub fn generate_seed(seed: u64, root: &Path) -> Result<SeedCorpus, CorpusError> {
    if root.exists() {
        let occupied = fs::read_dir(root)
            .map_err(|e| CorpusError::Io {
                path: root.display().to_string(),
                source: e,
            })?
            .next()
            .is_some();
        if occupied {
            return Err(CorpusError::DirectoryNotEmpty(root.to_path_buf()));
        }
    }

    let users = org_users();
    let files = seed_files();

    // Context files, one sidecar per source root.
    for domain in DOMAINS {
        let mut sidecar = Sidecar::new();
        for file in files.iter().filter(|f| f.domain == domain) {
            write(
                &root.join("data").join(domain).join(file.path),
                file.content,
            )?;
            sidecar.insert(
                file.path.to_owned(),
                SidecarEntry {
                    author: file.author.to_owned(),
                    timestamp: file.timestamp(),
                    sensitivity: file.sensitivity,
                    authority: file.authority,
                    entities: file.entities.iter().map(|e| e.to_string()).collect(),
                },
            );
        }
        write(
            &root.join("data").join(domain).join(SIDECAR_FILENAME),
            &serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )?;
    }

    for domain in DOMAINS {
        write(
            &root.join("manifests").join(format!("{domain}.yaml")),
            &manifest_template(domain),
        )?;
    }
    write(&root.join("taxonomy.json"), &taxonomy_json())?;
    write(
        &root.join("org.json"),
        &serde_json::to_string_pretty(&users).expect("org serializes"),
    )?;
    write(&root.join(CONFLICT_FIXTURE), CONFLICT_CONTENT)?;

    let benchmark = build_benchmark(seed, &files);
    write(
        &root.join("benchmark.json"),
        &serde_json::to_string_pretty(&benchmark).expect("benchmark serializes"),
    )?;

    Ok(SeedCorpus {
        root: root.to_path_buf(),
        seed,
        users,
        files,
        benchmark,
    })
}

/// Stable digest over the generated tree (paths and bytes), for the
/// determinism guarantee.
pub fn tree_digest(root: &Path) -> String {
    fn walk(dir: &Path, rel: &str, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .expect("corpus dir readable")
            .map(|e| e.expect("dir entry readable"))
            .collect();
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let name = entry.file_name().to_string_lossy().into_owned();
            let child_rel = if rel.is_empty() {
                name.clone()
            } else {
                format!("{rel}/{name}")
            };
            let path = entry.path();
            if path.is_dir() {
                walk(&path, &child_rel, out);
            } else {
                out.push((child_rel, fs::read(&path).expect("corpus file readable")));
            }
        }
    }
    let mut files = Vec::new();
    walk(root, "", &mut files);
    let mut hasher = Sha256::new();
    for (path, bytes) in files {
        hasher.update(path.as_bytes());
        hasher.update([0]);
        hasher.update(&bytes);
        hasher.update([0xff]);
    }
    format!("{:x}", hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctxplane_core::manifest::parse_manifest;
    use ctxplane_core::router::Taxonomy;
    use tempfile::TempDir;

    #[test]
    fn same_seed_regenerates_an_identical_tree() {
        let a = TempDir::new().unwrap();
        let b = TempDir::new().unwrap();
        generate_seed(42, a.path()).unwrap();
        generate_seed(42, b.path()).unwrap();
        assert_eq!(tree_digest(a.path()), tree_digest(b.path()));
    }

    #[test]
    fn occupied_directory_is_refused() {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("stray.txt"), "x").unwrap();
        let err = generate_seed(42, dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::DirectoryNotEmpty(_)));
    }

    #[test]
    fn twelve_context_files_across_five_domains() {
        let dir = TempDir::new().unwrap();
        let corpus = generate_seed(42, dir.path()).unwrap();
        assert_eq!(corpus.files.len(), 12);
        for domain in DOMAINS {
            assert!(corpus.files.iter().any(|f| f.domain == domain));
            assert!(dir
                .path()
                .join("data")
                .join(domain)
                .join(SIDECAR_FILENAME)
                .is_file());
        }
        assert_eq!(corpus.users.len(), 10);
    }

    #[test]
    fn manifests_parse_and_taxonomy_validates() {
        let dir = TempDir::new().unwrap();
        let corpus = generate_seed(42, dir.path()).unwrap();
        for domain in DOMAINS {
            let yaml = corpus.manifest_yaml(domain);
            assert!(
                !yaml.contains(ROOT_VAR),
                "placeholder must be substituted on load"
            );
            let manifest = parse_manifest(&yaml).expect("seed manifest parses");
            assert_eq!(manifest.name(), domain);
        }
        let taxonomy = Taxonomy::from_json(&corpus.taxonomy_json()).unwrap();
        assert!(taxonomy.validate(25).is_empty(), "{:?}", taxonomy.validate(25));
    }
}
