//! Declarative domain manifests.
//!
//! A domain manifest is a YAML document (`apiVersion: context/v1`,
//! `kind: ContextDomain`) that declares everything the control plane needs to
//! govern one organizational knowledge domain: where context comes from
//! (`sources`), who and what may touch it (`access`), how long it stays
//! trustworthy (`freshness`), and how it is prioritized for delivery
//! (`routing`). Parsing is strict — unknown fields, bad enum values, invalid
//! globs, zero durations, and weight-sum violations are all rejected with the
//! offending path — and deterministic: declared values are never silently
//! normalized.

mod duration;

pub use duration::{DurationError, Refresh, SpecDuration};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glob::PathPattern;
use crate::permissions::Tier;

pub const API_VERSION: &str = "context/v1";
pub const KIND: &str = "ContextDomain";

#[derive(Debug, Error)]
pub enum ManifestError {
    /// The document is not well-formed YAML.
    #[error("syntax error: {0}")]
    Syntax(String),
    /// The document is well-formed YAML but violates the manifest schema.
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

impl ManifestError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ManifestError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// A parsed, validated domain manifest with all defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct DomainManifest {
    pub api_version: String,
    pub kind: String,
    pub metadata: Metadata,
    pub spec: DomainSpec,
}

impl DomainManifest {
    pub fn name(&self) -> &str {
        &self.metadata.name
    }

    pub fn namespace(&self) -> &str {
        &self.metadata.namespace
    }

    pub fn sources(&self) -> &[SourceSpec] {
        &self.spec.sources
    }

    pub fn source(&self, name: &str) -> Option<&SourceSpec> {
        self.spec.sources.iter().find(|s| s.name == name)
    }

    pub fn access(&self) -> &AccessSpec {
        &self.spec.access
    }

    pub fn freshness(&self) -> &FreshnessPolicySpec {
        &self.spec.freshness
    }

    pub fn routing(&self) -> &RoutingSpec {
        &self.spec.routing
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.api_version != API_VERSION {
            return Err(ManifestError::schema(
                "apiVersion",
                format!(
                    "unsupported value \"{}\" (expected \"{API_VERSION}\")",
                    self.api_version
                ),
            ));
        }
        if self.kind != KIND {
            return Err(ManifestError::schema(
                "kind",
                format!("unsupported value \"{}\" (expected \"{KIND}\")", self.kind),
            ));
        }
        if !is_identifier(&self.metadata.name) {
            return Err(ManifestError::schema(
                "metadata.name",
                format!("\"{}\" is not a valid identifier", self.metadata.name),
            ));
        }
        if !is_identifier(&self.metadata.namespace) {
            return Err(ManifestError::schema(
                "metadata.namespace",
                format!("\"{}\" is not a valid identifier", self.metadata.namespace),
            ));
        }

        if self.spec.sources.is_empty() {
            return Err(ManifestError::schema(
                "sources",
                "at least one source is required",
            ));
        }
        let mut seen_sources = Vec::new();
        for source in &self.spec.sources {
            if !is_identifier(&source.name) {
                return Err(ManifestError::schema(
                    "sources",
                    format!("\"{}\" is not a valid source name", source.name),
                ));
            }
            if seen_sources.contains(&source.name.as_str()) {
                return Err(ManifestError::schema(
                    "sources",
                    format!("duplicate source name \"{}\"", source.name),
                ));
            }
            seen_sources.push(&source.name);
        }

        self.spec.access.validate(&self.metadata.name)?;
        self.spec.routing.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub name: String,
    #[serde(default = "default_namespace")]
    pub namespace: String,
    #[serde(default)]
    pub labels: IndexMap<String, String>,
}

fn default_namespace() -> String {
    "default".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct DomainSpec {
    pub sources: Vec<SourceSpec>,
    pub access: AccessSpec,
    #[serde(default)]
    pub freshness: FreshnessPolicySpec,
    #[serde(default)]
    pub routing: RoutingSpec,
    /// Operator configuration is retained for round-tripping but not
    /// evaluated; no operator runtime ships with the control plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<serde_yaml::Value>,
    /// Trust scoring configuration, retained but not evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust: Option<serde_yaml::Value>,
    /// Reliability scoring configuration, retained but not evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<serde_yaml::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceType {
    GitRepo,
    Connector,
    FileSystem,
    Database,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SourceSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub source_type: SourceType,
    /// Type-specific connection settings (repository URL, filesystem root,
    /// upstream system name, …). Interpreted by the connector layer, not here.
    #[serde(default)]
    pub config: IndexMap<String, String>,
    pub refresh: Refresh,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingestion: Option<IngestionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chunking {
    Semantic,
    PerThread,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct IngestionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunking: Option<Chunking>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<u32>,
    /// Embedding model hint. Retained for compatibility with external
    /// pipelines; the built-in vectorizer ignores it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttl: Option<SpecDuration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct AccessSpec {
    pub roles: Vec<RoleRule>,
    #[serde(default)]
    pub agent_permissions: AgentPermissions,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cross_domain: Vec<CrossDomainRule>,
}

impl AccessSpec {
    pub fn role(&self, name: &str) -> Option<&RoleRule> {
        self.roles.iter().find(|r| r.role == name)
    }

    /// None means the target domain is not mentioned at all (treated as
    /// denied by the permission engine — fail closed).
    pub fn cross_domain_mode(&self, domain: &str) -> Option<CrossDomainMode> {
        self.cross_domain
            .iter()
            .find(|r| r.domain == domain)
            .map(|r| r.mode)
    }

    fn validate(&self, domain: &str) -> Result<(), ManifestError> {
        if self.roles.is_empty() {
            return Err(ManifestError::schema(
                "access.roles",
                "at least one role is required",
            ));
        }
        let mut seen = Vec::new();
        for rule in &self.roles {
            if !is_identifier(&rule.role) {
                return Err(ManifestError::schema(
                    "access.roles",
                    format!("\"{}\" is not a valid role name", rule.role),
                ));
            }
            if seen.contains(&rule.role.as_str()) {
                return Err(ManifestError::schema(
                    "access.roles",
                    format!("duplicate role \"{}\"", rule.role),
                ));
            }
            seen.push(&rule.role);
        }
        let mut targets = Vec::new();
        for rule in &self.cross_domain {
            if rule.domain == domain {
                return Err(ManifestError::schema(
                    "access.crossDomain",
                    "a domain cannot reference itself",
                ));
            }
            if targets.contains(&rule.domain.as_str()) {
                return Err(ManifestError::schema(
                    "access.crossDomain",
                    format!("duplicate target \"{}\"", rule.domain),
                ));
            }
            targets.push(&rule.domain);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleRule {
    pub role: String,
    #[serde(default)]
    pub read: Vec<PathPattern>,
    #[serde(default)]
    pub write: Vec<PathPattern>,
}

impl RoleRule {
    pub fn can_read(&self, path: &str, assigned: &[String]) -> bool {
        self.read
            .iter()
            .any(|p| p.matches_with_assigned(path, assigned))
    }

    pub fn can_write(&self, path: &str, assigned: &[String]) -> bool {
        self.write
            .iter()
            .any(|p| p.matches_with_assigned(path, assigned))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct AgentPermissions {
    #[serde(default)]
    pub read: Tier,
    #[serde(default)]
    pub write: WriteTiers,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub execute: IndexMap<String, Tier>,
}

impl AgentPermissions {
    /// Tier required for an agent write to `path`: first matching pattern in
    /// declaration order wins, otherwise the declared default.
    pub fn write_tier(&self, path: &str) -> Tier {
        self.write
            .paths
            .iter()
            .find(|(pattern, _)| pattern.matches(path))
            .map(|(_, tier)| *tier)
            .unwrap_or(self.write.default)
    }

    /// Tier for a named operation; None means the operation is undeclared
    /// (the permission engine treats that as excluded).
    pub fn execute_tier(&self, operation: &str) -> Option<Tier> {
        self.execute.get(operation).copied()
    }
}

impl Default for AgentPermissions {
    fn default() -> Self {
        AgentPermissions {
            read: Tier::Autonomous,
            write: WriteTiers::default(),
            execute: IndexMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WriteTiers {
    pub default: Tier,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub paths: IndexMap<PathPattern, Tier>,
}

impl Default for WriteTiers {
    fn default() -> Self {
        WriteTiers {
            default: Tier::SoftApproval,
            paths: IndexMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossDomainMode {
    Brokered,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossDomainRule {
    pub domain: String,
    pub mode: CrossDomainMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StaleAction {
    ReSync,
    Flag,
    Archive,
}

/// The freshness policy that actually governs a unit once overrides are
/// resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GoverningPolicy {
    pub max_age: SpecDuration,
    pub stale_action: StaleAction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FreshnessPolicySpec {
    #[serde(default)]
    pub defaults: FreshnessDefaults,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<FreshnessOverride>,
}

impl FreshnessPolicySpec {
    /// Policy governing `path`: first matching override in declaration order
    /// wins, otherwise the defaults.
    pub fn rule_for(&self, path: &str) -> GoverningPolicy {
        for over in &self.overrides {
            if over.path.matches(path) {
                return GoverningPolicy {
                    max_age: over.max_age,
                    stale_action: over.stale_action,
                };
            }
        }
        GoverningPolicy {
            max_age: self.defaults.max_age,
            stale_action: self.defaults.stale_action,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FreshnessDefaults {
    #[serde(default = "default_max_age")]
    pub max_age: SpecDuration,
    #[serde(default = "default_stale_action")]
    pub stale_action: StaleAction,
}

impl Default for FreshnessDefaults {
    fn default() -> Self {
        FreshnessDefaults {
            max_age: default_max_age(),
            stale_action: default_stale_action(),
        }
    }
}

fn default_max_age() -> SpecDuration {
    SpecDuration::hours(24)
}

fn default_stale_action() -> StaleAction {
    StaleAction::Flag
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FreshnessOverride {
    pub path: PathPattern,
    pub max_age: SpecDuration,
    pub stale_action: StaleAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntentParsing {
    RuleBased,
    /// Accepted in manifests for compatibility; the router always uses the
    /// deterministic rule-based engine, so this value behaves identically.
    LlmAssisted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    SemanticRelevance,
    Recency,
    Authority,
    UserRelevance,
}

impl Signal {
    pub const ALL: [Signal; 4] = [
        Signal::SemanticRelevance,
        Signal::Recency,
        Signal::Authority,
        Signal::UserRelevance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Signal::SemanticRelevance => "semantic_relevance",
            Signal::Recency => "recency",
            Signal::Authority => "authority",
            Signal::UserRelevance => "user_relevance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrioritySignal {
    pub signal: Signal,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RoutingSpec {
    #[serde(default = "default_intent_parsing")]
    pub intent_parsing: IntentParsing,
    #[serde(default = "default_token_budget")]
    pub token_budget: u32,
    #[serde(default = "default_priority")]
    pub priority: Vec<PrioritySignal>,
}

impl RoutingSpec {
    pub fn weight(&self, signal: Signal) -> f64 {
        self.priority
            .iter()
            .find(|p| p.signal == signal)
            .map(|p| p.weight)
            .unwrap_or(0.0)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.token_budget == 0 {
            return Err(ManifestError::schema(
                "routing.tokenBudget",
                "must be positive",
            ));
        }
        for signal in Signal::ALL {
            let count = self.priority.iter().filter(|p| p.signal == signal).count();
            if count == 0 {
                return Err(ManifestError::schema(
                    "routing.priority",
                    format!("missing signal {}", signal.as_str()),
                ));
            }
            if count > 1 {
                return Err(ManifestError::schema(
                    "routing.priority",
                    format!("signal {} listed {count} times", signal.as_str()),
                ));
            }
        }
        for p in &self.priority {
            if !(0.0..=1.0).contains(&p.weight) || !p.weight.is_finite() {
                return Err(ManifestError::schema(
                    "routing.priority",
                    format!(
                        "weight for {} must be within [0, 1], got {}",
                        p.signal.as_str(),
                        p.weight
                    ),
                ));
            }
        }
        let sum: f64 = self.priority.iter().map(|p| p.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ManifestError::schema(
                "routing.priority",
                format!("weights sum to {sum:.2}"),
            ));
        }
        Ok(())
    }
}

impl Default for RoutingSpec {
    fn default() -> Self {
        RoutingSpec {
            intent_parsing: default_intent_parsing(),
            token_budget: default_token_budget(),
            priority: default_priority(),
        }
    }
}

fn default_intent_parsing() -> IntentParsing {
    IntentParsing::RuleBased
}

fn default_token_budget() -> u32 {
    8000
}

fn default_priority() -> Vec<PrioritySignal> {
    vec![
        PrioritySignal {
            signal: Signal::SemanticRelevance,
            weight: 0.40,
        },
        PrioritySignal {
            signal: Signal::Recency,
            weight: 0.30,
        },
        PrioritySignal {
            signal: Signal::Authority,
            weight: 0.20,
        },
        PrioritySignal {
            signal: Signal::UserRelevance,
            weight: 0.10,
        },
    ]
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

/// Parse a single YAML document into a validated manifest.
pub fn parse_manifest(text: &str) -> Result<DomainManifest, ManifestError> {
    let value: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| ManifestError::Syntax(e.to_string()))?;
    manifest_from_value(value)
}

/// Parse a `---`-separated stream of manifests. Empty documents are skipped.
pub fn parse_manifests(text: &str) -> Result<Vec<DomainManifest>, ManifestError> {
    let mut out = Vec::new();
    for doc in serde_yaml::Deserializer::from_str(text) {
        let value = serde_yaml::Value::deserialize(doc)
            .map_err(|e| ManifestError::Syntax(e.to_string()))?;
        if matches!(value, serde_yaml::Value::Null) {
            continue;
        }
        out.push(manifest_from_value(value)?);
    }
    Ok(out)
}

fn manifest_from_value(value: serde_yaml::Value) -> Result<DomainManifest, ManifestError> {
    let manifest: DomainManifest = serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        ManifestError::Schema {
            path,
            message: err.into_inner().to_string(),
        }
    })?;
    manifest.validate()?;
    Ok(manifest)
}

/// A dangling or duplicate reference found across a set of manifests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Check that every crossDomain target names a manifest in the set and that
/// no (namespace, name) pair appears twice.
pub fn validate_cross_references(manifests: &[DomainManifest]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for m in manifests {
        let key = (m.namespace(), m.name());
        if seen.contains(&key) {
            violations.push(Violation(format!("duplicate domain name {}", m.name())));
        } else {
            seen.push(key);
        }
    }
    for m in manifests {
        for rule in &m.spec.access.cross_domain {
            let found = manifests.iter().any(|other| other.name() == rule.domain);
            if !found {
                violations.push(Violation(format!(
                    "{}: crossDomain target {} not found",
                    m.name(),
                    rule.domain
                )));
            }
        }
    }
    violations
}

/// One observed difference between two manifests for the same domain.
/// The reconciler maps these to corrective deltas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestChange {
    Metadata,
    SourceAdded(String),
    SourceRemoved(String),
    SourceChanged(String),
    Access,
    Freshness,
    Routing,
}

/// Structural diff between two manifests, section by section.
pub fn diff(old: &DomainManifest, new: &DomainManifest) -> Vec<ManifestChange> {
    let mut changes = Vec::new();
    if old.metadata != new.metadata {
        changes.push(ManifestChange::Metadata);
    }
    for source in &new.spec.sources {
        match old.source(&source.name) {
            None => changes.push(ManifestChange::SourceAdded(source.name.clone())),
            Some(before) if before != source => {
                changes.push(ManifestChange::SourceChanged(source.name.clone()))
            }
            Some(_) => {}
        }
    }
    for source in &old.spec.sources {
        if new.source(&source.name).is_none() {
            changes.push(ManifestChange::SourceRemoved(source.name.clone()));
        }
    }
    if old.spec.access != new.spec.access {
        changes.push(ManifestChange::Access);
    }
    if old.spec.freshness != new.spec.freshness {
        changes.push(ManifestChange::Freshness);
    }
    if old.spec.routing != new.spec.routing {
        changes.push(ManifestChange::Routing);
    }
    changes
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Representative full-featured sales-domain manifest exercising every
    /// section: multi-source ingestion, role globs with `${assigned}`,
    /// tiered agent permissions, cross-domain modes, freshness overrides,
    /// routing weights, and a retained (unevaluated) operator block.
    const SALES_MANIFEST: &str = r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: sales
  namespace: acme-corp
  labels: {sensitivity: confidential, owner: head-of-sales}

spec:
  sources:
    - name: client-context
      type: git-repo
      config: {repo: git@ctx.internal:sales/clients.git}
      refresh: realtime
      ingestion: {chunking: semantic, chunkSize: 500,
                  embedding: text-embedding-3-small}
    - name: pipeline
      type: connector
      config: {system: salesforce, scope: opportunities,
               credentials: vault://sf/key}
      refresh: 1h
    - name: communications
      type: connector
      config: {system: gmail, filter: "label:client-comms"}
      refresh: 15m
      ingestion: {chunking: per-thread, ttl: 180d}

  access:
    roles:
      - role: sales-rep
        read: ["clients/${assigned}/*"]
        write: ["clients/${assigned}/*"]
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
        send-internal-msg: soft-approval
        send-external-email: strong-approval
        commit-to-pricing: excluded
    crossDomain:
      - {domain: operations, mode: brokered}
      - {domain: finance, mode: brokered}
      - {domain: hr, mode: denied}

  freshness:
    defaults: {maxAge: 24h, staleAction: flag}
    overrides:
      - {path: "*/communications/*", maxAge: 4h,
         staleAction: re-sync}
      - {path: "pipeline/*", maxAge: 1h,
         staleAction: re-sync}

  routing:
    intentParsing: llm-assisted
    tokenBudget: 8000
    priority:
      - {signal: semantic_relevance, weight: 0.40}
      - {signal: recency,           weight: 0.30}
      - {signal: authority,          weight: 0.20}
      - {signal: user_relevance,     weight: 0.10}

  operator:
    type: master-agent
    template: sales-v2
    intelligence:
      patternEngine: {minSignals: 3, window: 30d}
    guardrails:
      - "CANNOT commit to pricing without approval"
      - "CANNOT share client A data with client B"
"#;

    const MINIMAL_MANIFEST: &str = r#"
apiVersion: context/v1
kind: ContextDomain
metadata:
  name: notes
spec:
  sources:
    - name: local
      type: file-system
      config: {path: /srv/notes}
      refresh: 1h
  access:
    roles:
      - role: writer
        read: ["*"]
"#;

    #[test]
    fn parses_full_sales_manifest() {
        let m = parse_manifest(SALES_MANIFEST).unwrap();
        assert_eq!(m.name(), "sales");
        assert_eq!(m.namespace(), "acme-corp");
        assert_eq!(m.metadata.labels["sensitivity"], "confidential");
        assert_eq!(m.sources().len(), 3);
        assert_eq!(m.sources()[0].source_type, SourceType::GitRepo);
        assert_eq!(m.sources()[0].refresh, Refresh::Realtime);
        assert_eq!(
            m.sources()[0].config["repo"],
            "git@ctx.internal:sales/clients.git"
        );
        let ingestion = m.sources()[0].ingestion.as_ref().unwrap();
        assert_eq!(ingestion.chunking, Some(Chunking::Semantic));
        assert_eq!(ingestion.chunk_size, Some(500));
        assert_eq!(
            m.sources()[2].ingestion.as_ref().unwrap().ttl,
            Some(SpecDuration::days(180))
        );

        assert_eq!(m.routing().token_budget, 8000);
        let weights: Vec<f64> = m.routing().priority.iter().map(|p| p.weight).collect();
        assert_eq!(weights, vec![0.40, 0.30, 0.20, 0.10]);
        assert_eq!(m.routing().intent_parsing, IntentParsing::LlmAssisted);

        let access = m.access();
        assert!(access
            .role("sales-rep")
            .unwrap()
            .can_read("clients/henderson/profile.md", &["henderson".to_owned()]));
        assert!(!access
            .role("sales-rep")
            .unwrap()
            .can_read("clients/meridian/profile.md", &["henderson".to_owned()]));
        assert_eq!(
            access.agent_permissions.execute_tier("send-external-email"),
            Some(Tier::StrongApproval)
        );
        assert_eq!(
            access.agent_permissions.execute_tier("commit-to-pricing"),
            Some(Tier::Excluded)
        );
        assert_eq!(access.agent_permissions.execute_tier("reboot-prod"), None);
        assert_eq!(
            access.agent_permissions.write_tier("clients/acme/contracts/msa.md"),
            Tier::StrongApproval
        );
        assert_eq!(
            access.agent_permissions.write_tier("pipeline/q3.md"),
            Tier::Autonomous
        );
        assert_eq!(
            access.agent_permissions.write_tier("somewhere/else.md"),
            Tier::SoftApproval
        );
        assert_eq!(
            access.cross_domain_mode("finance"),
            Some(CrossDomainMode::Brokered)
        );
        assert_eq!(access.cross_domain_mode("hr"), Some(CrossDomainMode::Denied));
        assert_eq!(access.cross_domain_mode("legal"), None);

        let pricing = m.freshness().rule_for("pipeline/forecast.md");
        assert_eq!(pricing.max_age, SpecDuration::hours(1));
        assert_eq!(pricing.stale_action, StaleAction::ReSync);
        let default_rule = m.freshness().rule_for("clients/henderson/profile.md");
        assert_eq!(default_rule.max_age, SpecDuration::hours(24));
        assert_eq!(default_rule.stale_action, StaleAction::Flag);

        // Operator block is retained verbatim but never interpreted.
        let operator = m.spec.operator.as_ref().unwrap();
        assert_eq!(operator["type"], serde_yaml::Value::from("master-agent"));
    }

    #[test]
    fn minimal_manifest_gets_defaults() {
        let m = parse_manifest(MINIMAL_MANIFEST).unwrap();
        assert_eq!(m.namespace(), "default");
        assert_eq!(m.routing().token_budget, 8000);
        assert_eq!(m.routing().intent_parsing, IntentParsing::RuleBased);
        assert_eq!(m.routing().weight(Signal::SemanticRelevance), 0.40);
        // Default freshness applies to every path.
        for path in ["a.md", "deep/nested/file.md", "x"] {
            let rule = m.freshness().rule_for(path);
            assert_eq!(rule.max_age, SpecDuration::hours(24));
            assert_eq!(rule.stale_action, StaleAction::Flag);
        }
        assert_eq!(m.access().agent_permissions.read, Tier::Autonomous);
        assert_eq!(
            m.access().agent_permissions.write_tier("anything"),
            Tier::SoftApproval
        );
        assert!(m.access().cross_domain.is_empty());
    }

    #[test]
    fn weight_sum_violation_names_path_and_sum() {
        let text = SALES_MANIFEST.replace(
            "{signal: user_relevance,     weight: 0.10}",
            "{signal: user_relevance,     weight: 0.20}",
        );
        let err = parse_manifest(&text).unwrap_err();
        assert_eq!(err.to_string(), "routing.priority: weights sum to 1.10");
    }

    #[test]
    fn declared_weights_are_never_normalized() {
        // A sum just inside the tolerance parses and keeps its exact values.
        let m = parse_manifest(SALES_MANIFEST).unwrap();
        let sum: f64 = m.routing().priority.iter().map(|p| p.weight).sum();
        assert!((sum - 1.0).abs() <= 1e-9);
        assert_eq!(m.routing().priority[0].weight, 0.40);
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let text = format!("{SALES_MANIFEST}\nplugins: []\n");
        let err = parse_manifest(&text).unwrap_err();
        match err {
            ManifestError::Schema { message, .. } => assert!(
                message.contains("plugins"),
                "message should name the unknown key: {message}"
            ),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_enum_value_names_offending_path() {
        let text = SALES_MANIFEST.replace("type: git-repo", "type: s3-bucket");
        let err = parse_manifest(&text).unwrap_err();
        match err {
            ManifestError::Schema { path, message } => {
                assert_eq!(path, "spec.sources[0].type");
                assert!(message.contains("s3-bucket"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_kind_is_schema_error() {
        let text = SALES_MANIFEST.replace("kind: ContextDomain\n", "");
        let err = parse_manifest(&text).unwrap_err();
        match err {
            ManifestError::Schema { message, .. } => assert!(message.contains("kind")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_yaml_is_syntax_error() {
        let err = parse_manifest("a: [unclosed").unwrap_err();
        assert!(matches!(err, ManifestError::Syntax(_)));
    }

    #[test]
    fn zero_refresh_rejected() {
        let text = SALES_MANIFEST.replace("refresh: 1h", "refresh: 0h");
        let err = parse_manifest(&text).unwrap_err();
        match err {
            ManifestError::Schema { path, .. } => assert_eq!(path, "spec.sources[1].refresh"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_agent_write_path_rejected() {
        let text = SALES_MANIFEST.replace(
            "\"pipeline/*\": autonomous",
            "\"pipeline/*\": autonomous\n          \"pipeline/*\": soft-approval",
        );
        assert!(parse_manifest(&text).is_err());
    }

    #[test]
    fn duplicate_source_name_rejected() {
        let text = SALES_MANIFEST.replace("name: communications", "name: pipeline");
        let err = parse_manifest(&text).unwrap_err();
        assert_eq!(err.to_string(), "sources: duplicate source name \"pipeline\"");
    }

    #[test]
    fn wrong_api_version_rejected() {
        let text = SALES_MANIFEST.replace("context/v1", "context/v2");
        let err = parse_manifest(&text).unwrap_err();
        assert!(err.to_string().starts_with("apiVersion:"));
    }

    #[test]
    fn round_trips_structurally() {
        let m = parse_manifest(SALES_MANIFEST).unwrap();
        let text = serde_yaml::to_string(&m).unwrap();
        let again = parse_manifest(&text).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn multi_document_stream() {
        let other = MINIMAL_MANIFEST.replace("name: notes", "name: scratch");
        let stream = format!("{SALES_MANIFEST}\n---\n{MINIMAL_MANIFEST}\n---\n{other}\n---\n");
        let all = parse_manifests(&stream).unwrap();
        let names: Vec<&str> = all.iter().map(|m| m.name()).collect();
        assert_eq!(names, vec!["sales", "notes", "scratch"]);
    }

    #[test]
    fn cross_reference_checks() {
        let sales = parse_manifest(SALES_MANIFEST).unwrap();
        let mut ops = parse_manifest(MINIMAL_MANIFEST).unwrap();
        ops.metadata.name = "operations".to_owned();
        let mut fin = ops.clone();
        fin.metadata.name = "finance".to_owned();
        let mut hr = ops.clone();
        hr.metadata.name = "hr".to_owned();

        let ok = validate_cross_references(&[sales.clone(), ops.clone(), fin, hr]);
        assert!(ok.is_empty(), "expected no violations, got {ok:?}");

        let dangling = validate_cross_references(std::slice::from_ref(&sales));
        assert!(dangling
            .iter()
            .any(|v| v.0 == "sales: crossDomain target finance not found"));

        let dupes = validate_cross_references(&[sales.clone(), sales]);
        assert!(dupes.iter().any(|v| v.0 == "duplicate domain name sales"));
    }

    #[test]
    fn diff_reports_changed_sections() {
        let old = parse_manifest(SALES_MANIFEST).unwrap();
        assert!(diff(&old, &old).is_empty());

        let mut new = old.clone();
        new.spec.access.cross_domain.pop();
        new.spec.sources.remove(2);
        new.spec.routing.token_budget = 4000;
        let changes = diff(&old, &new);
        assert!(changes.contains(&ManifestChange::Access));
        assert!(changes.contains(&ManifestChange::SourceRemoved("communications".into())));
        assert!(changes.contains(&ManifestChange::Routing));
        assert!(!changes.contains(&ManifestChange::Freshness));
        assert!(!changes.contains(&ManifestChange::Metadata));
    }
}
