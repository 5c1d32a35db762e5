//! Duration literals as they appear in manifests: integer + unit suffix.
//!
//! Accepted units: `m` (minutes), `h` (hours), `d` (days), `y` (years).
//! A year is 365 days. Values round-trip to the exact string they were
//! declared with.

use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DurationError {
    #[error("invalid duration {0:?}: expected <integer><m|h|d|y>")]
    Malformed(String),
    #[error("duration {0:?} must be greater than zero")]
    Zero(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpecDuration {
    value: u64,
    unit: Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Minutes,
    Hours,
    Days,
    Years,
}

impl Unit {
    fn seconds(self) -> u64 {
        match self {
            Unit::Minutes => 60,
            Unit::Hours => 3_600,
            Unit::Days => 86_400,
            Unit::Years => 365 * 86_400,
        }
    }

    fn suffix(self) -> char {
        match self {
            Unit::Minutes => 'm',
            Unit::Hours => 'h',
            Unit::Days => 'd',
            Unit::Years => 'y',
        }
    }
}

impl SpecDuration {
    pub fn minutes(value: u64) -> Self {
        Self {
            value,
            unit: Unit::Minutes,
        }
    }

    pub fn hours(value: u64) -> Self {
        Self {
            value,
            unit: Unit::Hours,
        }
    }

    pub fn days(value: u64) -> Self {
        Self {
            value,
            unit: Unit::Days,
        }
    }

    pub fn as_seconds(&self) -> u64 {
        self.value * self.unit.seconds()
    }

    pub fn as_chrono(&self) -> chrono::Duration {
        chrono::Duration::seconds(self.as_seconds() as i64)
    }
}

impl FromStr for SpecDuration {
    type Err = DurationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.len() < 2 {
            return Err(DurationError::Malformed(s.to_string()));
        }
        let (num, suffix) = s.split_at(s.len() - 1);
        let unit = match suffix {
            "m" => Unit::Minutes,
            "h" => Unit::Hours,
            "d" => Unit::Days,
            "y" => Unit::Years,
            _ => return Err(DurationError::Malformed(s.to_string())),
        };
        let value: u64 = num
            .parse()
            .map_err(|_| DurationError::Malformed(s.to_string()))?;
        if value == 0 {
            return Err(DurationError::Zero(s.to_string()));
        }
        Ok(Self { value, unit })
    }
}

impl std::fmt::Display for SpecDuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.value, self.unit.suffix())
    }
}

impl TryFrom<String> for SpecDuration {
    type Error = DurationError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<SpecDuration> for String {
    fn from(value: SpecDuration) -> Self {
        value.to_string()
    }
}

/// A source refresh interval: either a plain duration or `realtime`.
///
/// For pull-based connectors `realtime` means "poll every reconciliation
/// cycle"; there is no push path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Refresh {
    Realtime,
    Every(SpecDuration),
}

impl Refresh {
    /// Poll interval in seconds with the documented 1s floor; `realtime`
    /// polls every cycle.
    pub fn poll_seconds(&self) -> u64 {
        match self {
            Refresh::Realtime => 1,
            Refresh::Every(d) => d.as_seconds().max(1),
        }
    }
}

impl TryFrom<String> for Refresh {
    type Error = DurationError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        if value.trim() == "realtime" {
            Ok(Refresh::Realtime)
        } else {
            Ok(Refresh::Every(value.parse()?))
        }
    }
}

impl From<Refresh> for String {
    fn from(value: Refresh) -> Self {
        match value {
            Refresh::Realtime => "realtime".to_string(),
            Refresh::Every(d) => d.to_string(),
        }
    }
}
