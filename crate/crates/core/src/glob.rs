//! Path pattern matching for access rules and freshness overrides.
//!
//! The dialect is deliberately small:
//!
//! - patterns and paths are split on `/` into segments
//! - a segment consisting solely of `*` spans one or more whole path
//!   segments wherever it appears: `pipeline/*` covers everything nested
//!   below `pipeline/`, `*/contracts/*` covers any `contracts/` directory at
//!   any depth, and a bare `*` covers every path
//! - `*` mixed with other characters (`q*-summary.md`) matches any run of
//!   characters within that single segment
//! - `${assigned}` is a variable substituted from the session scope at
//!   check time; a pattern containing it matches only when some assigned
//!   value makes the concrete pattern match
//!
//! `**` is not part of the dialect and is rejected at validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only variable recognized inside path patterns.
pub const ASSIGNED_VAR: &str = "${assigned}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GlobError {
    #[error("empty pattern")]
    Empty,
    #[error("`**` is not supported (pattern {0:?})")]
    DoubleStar(String),
    #[error("unknown variable {var:?} in pattern {pattern:?}")]
    UnknownVariable { var: String, pattern: String },
}

/// A validated path pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PathPattern {
    raw: String,
}

impl PathPattern {
    pub fn parse(raw: &str) -> Result<Self, GlobError> {
        if raw.is_empty() {
            return Err(GlobError::Empty);
        }
        if raw.contains("**") {
            return Err(GlobError::DoubleStar(raw.to_string()));
        }
        // Any ${...} other than ${assigned} is a typo, not a feature.
        let mut rest = raw;
        while let Some(start) = rest.find("${") {
            let tail = &rest[start..];
            match tail.find('}') {
                Some(end) => {
                    let var = &tail[..=end];
                    if var != ASSIGNED_VAR {
                        return Err(GlobError::UnknownVariable {
                            var: var.to_string(),
                            pattern: raw.to_string(),
                        });
                    }
                    rest = &tail[end + 1..];
                }
                None => {
                    return Err(GlobError::UnknownVariable {
                        var: tail.to_string(),
                        pattern: raw.to_string(),
                    })
                }
            }
        }
        Ok(Self {
            raw: raw.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn has_assigned_var(&self) -> bool {
        self.raw.contains(ASSIGNED_VAR)
    }

    /// Match against a path with no variable substitution. Patterns that
    /// contain `${assigned}` never match here.
    pub fn matches(&self, path: &str) -> bool {
        if self.has_assigned_var() {
            return false;
        }
        match_concrete(&self.raw, path)
    }

    /// Match with `${assigned}` drawn from the given scope values. A pattern
    /// without the variable ignores the scope.
    pub fn matches_with_assigned(&self, path: &str, assigned: &[String]) -> bool {
        if !self.has_assigned_var() {
            return match_concrete(&self.raw, path);
        }
        assigned
            .iter()
            .any(|value| match_concrete(&self.raw.replace(ASSIGNED_VAR, value), path))
    }

    /// Match with `${assigned}` treated as a wildcard: true when *some*
    /// assignment could make the pattern match. Used to derive the set of
    /// roles potentially authorized for a unit at ingest; the per-session
    /// assignment check still happens at access time.
    pub fn matches_any_assigned(&self, path: &str) -> bool {
        if !self.has_assigned_var() {
            return match_concrete(&self.raw, path);
        }
        match_concrete(&self.raw.replace(ASSIGNED_VAR, "*"), path)
    }
}

impl TryFrom<String> for PathPattern {
    type Error = GlobError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        PathPattern::parse(&value)
    }
}

impl From<PathPattern> for String {
    fn from(value: PathPattern) -> Self {
        value.raw
    }
}

impl std::fmt::Display for PathPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.raw)
    }
}

fn match_concrete(pattern: &str, path: &str) -> bool {
    let pat_segs: Vec<&str> = pattern.split('/').collect();
    let path_segs: Vec<&str> = path.split('/').collect();
    match_from(&pat_segs, &path_segs)
}

/// Segment-level matching with backtracking: a pattern segment that is
/// exactly `*` consumes one or more whole path segments.
fn match_from(pat: &[&str], path: &[&str]) -> bool {
    match pat.first() {
        None => path.is_empty(),
        Some(&"*") => (1..=path.len()).any(|taken| match_from(&pat[1..], &path[taken..])),
        Some(seg) => match path.first() {
            Some(head) if match_segment(seg, head) => match_from(&pat[1..], &path[1..]),
            _ => false,
        },
    }
}

/// `*` within a segment matches any run of non-`/` characters.
fn match_segment(pattern: &str, segment: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == segment;
    }
    let mut pos = 0usize;
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        if i == 0 {
            if !segment.starts_with(part) {
                return false;
            }
            pos = part.len();
        } else if i == parts.len() - 1 {
            let rest = &segment[pos..];
            return rest.ends_with(part) && rest.len() >= part.len();
        } else {
            match segment[pos..].find(part) {
                Some(idx) => pos += idx + part.len(),
                None => return false,
            }
        }
    }
    true
}
