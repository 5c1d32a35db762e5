//! The one definition of a leak and of noise, shared by every pipeline so
//! the comparison stays honest, plus small latency aggregation helpers.

use std::collections::BTreeSet;

use serde::Serialize;

/// What a pipeline delivered for one query, reduced to the fields the
/// metrics need.
#[derive(Debug, Clone)]
pub struct Delivered {
    pub unit_id: String,
    pub domain: String,
    pub authorized_roles: BTreeSet<String>,
}

/// A delivered unit leaks when the querying user's role is not on the
/// unit's authorized list, or the unit's domain lies outside the set the
/// user's home domain permits (home plus brokered).
pub fn is_leak(unit: &Delivered, role: &str, permitted: &BTreeSet<String>) -> bool {
    !unit.authorized_roles.contains(role) || !permitted.contains(&unit.domain)
}

/// Running totals across a full query set.
#[derive(Debug, Default, Clone, Serialize)]
pub struct RunMetrics {
    pub queries: usize,
    pub delivered: usize,
    pub leaks: usize,
    pub noise: usize,
}

impl RunMetrics {
    /// Fold in one query's deliveries. Noise counts delivered units absent
    /// from the query's ground-truth set.
    pub fn record(
        &mut self,
        delivered: &[Delivered],
        role: &str,
        permitted: &BTreeSet<String>,
        ground_truth: &BTreeSet<String>,
    ) {
        self.queries += 1;
        self.delivered += delivered.len();
        for unit in delivered {
            if is_leak(unit, role, permitted) {
                self.leaks += 1;
            }
            if !ground_truth.contains(&unit.unit_id) {
                self.noise += 1;
            }
        }
    }

    pub fn leak_pct(&self) -> f64 {
        percentage(self.leaks, self.delivered)
    }

    pub fn noise_pct(&self) -> f64 {
        percentage(self.noise, self.delivered)
    }
}

fn percentage(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_millis(samples: &[f64]) -> LatencyStats {
        if samples.is_empty() {
            return LatencyStats {
                mean_ms: 0.0,
                p95_ms: 0.0,
                max_ms: 0.0,
            };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let p95_index = ((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1;
        LatencyStats {
            mean_ms: mean,
            p95_ms: sorted[p95_index],
            max_ms: *sorted.last().unwrap(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, domain: &str, roles: &[&str]) -> Delivered {
        Delivered {
            unit_id: id.into(),
            domain: domain.into(),
            authorized_roles: roles.iter().map(|r| r.to_string()).collect(),
        }
    }

    #[test]
    fn leak_requires_role_and_domain_to_both_pass() {
        let permitted: BTreeSet<String> = ["sales", "clients"].iter().map(|s| s.to_string()).collect();
        let ok = unit("u1", "sales", &["sales-rep"]);
        let wrong_role = unit("u2", "sales", &["sales-manager"]);
        let wrong_domain = unit("u3", "hr", &["sales-rep"]);
        assert!(!is_leak(&ok, "sales-rep", &permitted));
        assert!(is_leak(&wrong_role, "sales-rep", &permitted));
        assert!(is_leak(&wrong_domain, "sales-rep", &permitted));
    }

    #[test]
    fn noise_is_measured_against_ground_truth() {
        let permitted: BTreeSet<String> = ["sales"].iter().map(|s| s.to_string()).collect();
        let truth: BTreeSet<String> = ["u1".to_string()].into_iter().collect();
        let mut metrics = RunMetrics::default();
        metrics.record(
            &[unit("u1", "sales", &["sales-rep"]), unit("u2", "sales", &["sales-rep"])],
            "sales-rep",
            &permitted,
            &truth,
        );
        assert_eq!(metrics.delivered, 2);
        assert_eq!(metrics.noise, 1);
        assert_eq!(metrics.leaks, 0);
        assert!((metrics.noise_pct() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn latency_percentiles_come_from_the_sorted_samples() {
        let samples: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let stats = LatencyStats::from_millis(&samples);
        assert!((stats.mean_ms - 50.5).abs() < 1e-9);
        assert!((stats.p95_ms - 95.0).abs() < 1e-9);
        assert!((stats.max_ms - 100.0).abs() < 1e-9);
    }
}
