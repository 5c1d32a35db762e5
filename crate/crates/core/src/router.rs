//! Query routing: keyword-taxonomy intent classification, multi-signal
//! ranking, and token budgeting.
//!
//! Classification is deliberately boring — weighted keyword counts, no
//! model calls — so that every routing decision is reproducible and
//! explainable. Keywords that appear in many domains count for less than
//! keywords unique to one (a term shared by three domains contributes a
//! third of a unique term's weight). Queries that match nothing fall back
//! to the session's home domain instead of guessing.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::manifest::{RoutingSpec, Signal};
use crate::registry::{token_count, AnnotatedUnit};
use crate::vector::{cosine, tokenize};

/// Words that refer back to the previous subject of conversation. When a
/// query leans on one of these and the session remembers its last concrete
/// entity, the entity is substituted before classification.
const PRONOUNS: &[&str] = &[
    "it", "its", "they", "them", "their", "theirs", "this", "that", "these", "those", "he", "she",
    "him", "her", "his", "hers",
];

/// Domain → keyword list. Serialized as a flat JSON object so taxonomy
/// files stay hand-editable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Taxonomy {
    pub domains: IndexMap<String, Vec<String>>,
}

impl Taxonomy {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }

    /// Structural problems: domains below the keyword floor, keywords that
    /// are not single lowercase tokens, duplicates within a domain.
    pub fn validate(&self, min_keywords: usize) -> Vec<String> {
        let mut problems = Vec::new();
        for (domain, keywords) in &self.domains {
            if keywords.len() < min_keywords {
                problems.push(format!(
                    "{domain}: {} keywords, need at least {min_keywords}",
                    keywords.len()
                ));
            }
            let mut seen = std::collections::BTreeSet::new();
            for kw in keywords {
                let tokens = tokenize(kw);
                if tokens.len() != 1 || tokens[0] != *kw {
                    problems.push(format!(
                        "{domain}: keyword {kw:?} is not a single lowercase token"
                    ));
                }
                if !seen.insert(kw) {
                    problems.push(format!("{domain}: duplicate keyword {kw:?}"));
                }
            }
        }
        problems
    }
}

/// One ranked destination for a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfidence {
    pub domain: String,
    pub confidence: f64,
}

/// The router's reading of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub raw_query: String,
    /// Query after pronoun resolution; what classification actually saw.
    pub resolved_query: String,
    /// Candidate domains, confidence descending, zero-score domains omitted.
    /// Confidences are normalized shares in [0, 1].
    pub domains: Vec<DomainConfidence>,
    /// Known entities mentioned, in query order.
    pub entities: Vec<String>,
    /// True when no keyword matched and the home domain was used instead.
    pub fallback: bool,
    /// True when this classification was served from the intent cache.
    pub cached: bool,
}

impl Intent {
    /// The single best domain for this query.
    pub fn top_domain(&self) -> Option<&str> {
        self.domains.first().map(|d| d.domain.as_str())
    }
}

/// Intent classifier with a per-resolved-query cache and an entity lexicon
/// learned from ingested content.
#[derive(Debug)]
pub struct Router {
    taxonomy: Taxonomy,
    /// keyword → domains listing it (for specificity weighting).
    keyword_domains: HashMap<String, Vec<String>>,
    entities: std::collections::BTreeSet<String>,
    cache: Mutex<HashMap<(String, String), Intent>>,
}

impl Router {
    pub fn new(taxonomy: Taxonomy) -> Self {
        let mut keyword_domains: HashMap<String, Vec<String>> = HashMap::new();
        for (domain, keywords) in &taxonomy.domains {
            for kw in keywords {
                let entry = keyword_domains.entry(kw.clone()).or_default();
                if !entry.contains(domain) {
                    entry.push(domain.clone());
                }
            }
        }
        Router {
            taxonomy,
            keyword_domains,
            entities: Default::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// Replace the entity lexicon (names the classifier will recognize in
    /// queries). Lowercased on the way in. Clears the intent cache, since
    /// entity extraction feeds cached intents.
    pub fn set_entities(&mut self, entities: impl IntoIterator<Item = String>) {
        self.entities = entities.into_iter().map(|e| e.to_lowercase()).collect();
        self.cache.lock().clear();
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    /// How much one occurrence of `keyword` contributes: the reciprocal of
    /// the number of domains that claim it, zero if none do.
    pub fn specificity(&self, keyword: &str) -> f64 {
        self.keyword_domains
            .get(keyword)
            .map_or(0.0, |ds| 1.0 / ds.len() as f64)
    }

    /// Classify a query. Pronouns resolve against `last_entity` *before*
    /// the cache is consulted, so two sessions talking about different
    /// subjects never share a cache line for "tell me more about them".
    pub fn classify(&self, query: &str, home_domain: &str, last_entity: Option<&str>) -> Intent {
        let mut resolved_tokens = Vec::new();
        for token in tokenize(query) {
            if PRONOUNS.contains(&token.as_str()) {
                if let Some(entity) = last_entity {
                    resolved_tokens.extend(tokenize(entity));
                    continue;
                }
            }
            resolved_tokens.push(token);
        }
        let resolved_query = resolved_tokens.join(" ");

        let cache_key = (resolved_query.clone(), home_domain.to_owned());
        if let Some(hit) = self.cache.lock().get(&cache_key) {
            let mut intent = hit.clone();
            intent.raw_query = query.to_owned();
            intent.cached = true;
            return intent;
        }

        let mut entities = Vec::new();
        for token in &resolved_tokens {
            if self.entities.contains(token) && !entities.contains(token) {
                entities.push(token.clone());
            }
        }

        let mut scores: IndexMap<&str, f64> = IndexMap::new();
        for token in &resolved_tokens {
            if let Some(domains) = self.keyword_domains.get(token) {
                let weight = 1.0 / domains.len() as f64;
                for domain in domains {
                    *scores.entry(domain.as_str()).or_insert(0.0) += weight;
                }
            }
        }

        let total: f64 = scores.values().sum();
        let mut intent = if total > 0.0 {
            let mut ranked: Vec<DomainConfidence> = scores
                .into_iter()
                .map(|(domain, score)| DomainConfidence {
                    domain: domain.to_owned(),
                    confidence: score / total,
                })
                .collect();
            ranked.sort_by(|a, b| {
                b.confidence
                    .partial_cmp(&a.confidence)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.domain.cmp(&b.domain))
            });
            Intent {
                raw_query: query.to_owned(),
                resolved_query,
                domains: ranked,
                entities,
                fallback: false,
                cached: false,
            }
        } else {
            Intent {
                raw_query: query.to_owned(),
                resolved_query,
                domains: vec![DomainConfidence {
                    domain: home_domain.to_owned(),
                    confidence: 1.0,
                }],
                entities,
                fallback: true,
                cached: false,
            }
        };

        self.cache.lock().insert(cache_key, intent.clone());
        intent.cached = false;
        intent
    }
}

/// Per-signal values for one unit, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalBreakdown {
    pub semantic_relevance: f64,
    pub recency: f64,
    pub authority: f64,
    pub user_relevance: f64,
}

impl SignalBreakdown {
    pub fn get(&self, signal: Signal) -> f64 {
        match signal {
            Signal::SemanticRelevance => self.semantic_relevance,
            Signal::Recency => self.recency,
            Signal::Authority => self.authority,
            Signal::UserRelevance => self.user_relevance,
        }
    }
}

/// A unit entering the ranking step, with the freshness policy that governs
/// its recency half-life.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub annotated: AnnotatedUnit,
    pub max_age_seconds: u64,
}

/// A unit that survived ranking, carrying its score and the evidence for it.
#[derive(Debug, Clone)]
pub struct RankedUnit {
    pub annotated: AnnotatedUnit,
    pub score: f64,
    pub signals: SignalBreakdown,
    /// Set when the budget step had to cut this unit's content.
    pub truncated: bool,
}

/// User relevance is binary-ish: full weight when the unit concerns an
/// entity assigned to this session (by path segment or tagged entity),
/// a 0.25 floor otherwise so unassigned material can still surface.
fn user_relevance(unit: &AnnotatedUnit, assigned: &[String]) -> f64 {
    let hit = assigned.iter().any(|a| {
        let a = a.to_lowercase();
        unit.unit.metadata.path.split('/').any(|seg| seg == a)
            || unit
                .unit
                .metadata
                .entities
                .iter()
                .any(|e| e.to_lowercase() == a)
    });
    if hit {
        1.0
    } else {
        0.25
    }
}

/// Score candidates against a query vector and order them best-first.
/// Ties break toward newer content, then lexicographic path.
pub fn rank(
    candidates: Vec<Candidate>,
    query_vector: &[f64],
    assigned: &[String],
    routing: &RoutingSpec,
    now: DateTime<Utc>,
) -> Vec<RankedUnit> {
    let mut ranked: Vec<RankedUnit> = candidates
        .into_iter()
        .map(|c| {
            let unit = &c.annotated.unit;
            let age = (now - unit.metadata.timestamp).num_seconds().max(0) as f64;
            let recency = if c.max_age_seconds == 0 {
                0.0
            } else {
                (-age / c.max_age_seconds as f64).exp()
            };
            let signals = SignalBreakdown {
                semantic_relevance: cosine(query_vector, &unit.vector),
                recency,
                authority: unit.metadata.authority.clamp(0.0, 1.0),
                user_relevance: user_relevance(&c.annotated, assigned),
            };
            let score = Signal::ALL
                .iter()
                .map(|&s| routing.weight(s) * signals.get(s))
                .sum();
            RankedUnit {
                annotated: c.annotated,
                score,
                signals,
                truncated: false,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                b.annotated
                    .unit
                    .metadata
                    .timestamp
                    .cmp(&a.annotated.unit.metadata.timestamp)
            })
            .then_with(|| a.annotated.unit.metadata.path.cmp(&b.annotated.unit.metadata.path))
    });
    ranked
}

/// Greedy prefix under a token budget. The best unit is always delivered:
/// if it alone exceeds the budget its content is cut at the budget (four
/// characters per token) and marked truncated. After that, units are taken
/// in rank order until the next one no longer fits.
pub fn apply_token_budget(ranked: Vec<RankedUnit>, budget: u64) -> Vec<RankedUnit> {
    let mut delivered = Vec::new();
    let mut used: u64 = 0;
    for (index, mut item) in ranked.into_iter().enumerate() {
        let tokens = item.annotated.unit.token_count();
        if index == 0 {
            if tokens > budget {
                let keep = (budget * 4) as usize;
                item.annotated.unit.content =
                    item.annotated.unit.content.chars().take(keep).collect();
                item.truncated = true;
            }
            used = item.annotated.unit.token_count();
            delivered.push(item);
            continue;
        }
        if used + tokens > budget {
            break;
        }
        used += tokens;
        delivered.push(item);
    }
    delivered
}

/// Total tokens across delivered units.
pub fn delivered_tokens(delivered: &[RankedUnit]) -> u64 {
    delivered
        .iter()
        .map(|r| token_count(&r.annotated.unit.content))
        .sum()
}
