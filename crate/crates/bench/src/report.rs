//! Text and JSON rendering for experiment results: a comparison table for
//! the four pipelines, the attack matrix across the three permission
//! models, and plain listings for the other experiments.

use serde::Serialize;

use crate::attacks::AttackMatrix;
use crate::baselines::BaselineReport;
use crate::correctness::{C1Report, C2Report, C3Report, C5Report, SoakReport};
use crate::scenarios::FreshnessReport;

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

/// The four-pipeline comparison, one row per baseline.
pub fn render_baselines(reports: &[BaselineReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>7} {:>8} {:>8} {:>9} {:>10}\n",
        "Baseline", "Leaks", "Leak%", "Noise%", "Attacks", "p95 ms"
    ));
    for report in reports {
        out.push_str(&format!(
            "{:<16} {:>7} {:>7.1}% {:>7.1}% {:>6}/{} {:>10.2}\n",
            format!("{:?} {}", report.baseline, report.label),
            report.metrics.leaks,
            report.leak_pct,
            report.noise_pct,
            report.attacks_blocked,
            report.attacks_total,
            report.latency.p95_ms,
        ));
    }
    out
}

/// The five-scenario attack matrix across the three permission models.
pub fn render_attacks(matrices: &[AttackMatrix]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<44}", "Attack scenario"));
    for matrix in matrices {
        out.push_str(&format!(" {:>12}", matrix.model.label()));
    }
    out.push('\n');
    if let Some(first) = matrices.first() {
        for (i, row) in first.rows.iter().enumerate() {
            out.push_str(&format!("{:<44}", row.scenario));
            for matrix in matrices {
                let verdict = if matrix.rows[i].allowed { "Allowed" } else { "Blocked" };
                out.push_str(&format!(" {verdict:>12}"));
            }
            out.push('\n');
        }
    }
    out.push_str(&format!("{:<44}", "Attacks blocked"));
    for matrix in matrices {
        out.push_str(&format!(
            " {:>12}",
            format!("{}/{}", matrix.blocked(), matrix.rows.len())
        ));
    }
    out.push('\n');
    out
}

pub fn render_freshness(reports: &[FreshnessReport]) -> String {
    let mut out = String::new();
    for report in reports {
        out.push_str(&format!(
            "reconciliation {}: phantom served in {} quer{}, contradiction co-delivered: {}, \
             conflict resolved to newest: {}, stale flagged: {}\n",
            if report.with_reconciliation { "on" } else { "off" },
            report.phantom_served,
            if report.phantom_served == 1 { "y" } else { "ies" },
            report.contradiction_co_delivered,
            report.conflict_resolved_to_newest,
            report.stale_flagged,
        ));
        for row in &report.rows {
            out.push_str(&format!(
                "  [{}] {} → {} unit(s); {}\n",
                row.scenario, row.query, row.delivered, row.observation
            ));
        }
    }
    out
}

pub fn render_c1(report: &C1Report) -> String {
    format!(
        "routing accuracy {}/{} = {:.1}% (classify p95 {:.3} ms); misrouting fuzz: \
         {} queries, {} violations\n",
        report.correct,
        report.total,
        100.0 * report.accuracy,
        report.classify_latency.p95_ms,
        report.fuzz_queries,
        report.fuzz_violations
    )
}

fn render_cases(rows: &[crate::correctness::CaseRow]) -> String {
    rows.iter()
        .map(|c| {
            format!(
                "  [{}] {} — {}\n",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            )
        })
        .collect()
}

pub fn render_c2(report: &C2Report) -> String {
    format!(
        "{}unauthorized deliveries: {}, false positives: {}, invariant violations: {}\n",
        render_cases(&report.cases),
        report.unauthorized_deliveries,
        report.false_positives,
        report.invariant_violations
    )
}

pub fn render_c3(report: &C3Report) -> String {
    format!(
        "{}transitions: {}; stale detection {:.3} ms, disconnect detection {:.3} ms, \
         20-source cycle warm {:.1} ms\n",
        render_cases(&report.rows),
        report.transition_sequence.join(" → "),
        report.stale_detection_ms,
        report.disconnect_detection_ms,
        report.warm_cycle_20_ms
    )
}

pub fn render_c5(report: &C5Report) -> String {
    let passed = report.cases.iter().filter(|c| c.passed).count();
    format!("{}{}/{} passed\n", render_cases(&report.cases), passed, report.cases.len())
}

pub fn render_soak(report: &SoakReport) -> String {
    format!(
        "{} sessions for {:.1} s: {} queries ({:.1}/s), {} violations; \
         single-domain p95 {:.2} ms, cross-domain p95 {:.2} ms\n",
        report.sessions,
        report.duration_s,
        report.queries,
        report.queries_per_second,
        report.violations,
        report.simple_latency.p95_ms,
        report.cross_latency.p95_ms
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{run_attacks, AttackModel};
    use crate::world::{GovernedWorld, RawWorld};

    #[test]
    fn attack_table_has_five_rows_and_a_summary() {
        let governed = GovernedWorld::with_seed(42);
        let raw = RawWorld::load(&governed.corpus);
        let matrices = vec![
            run_attacks(AttackModel::NoGov, &governed, &raw),
            run_attacks(AttackModel::Rbac, &governed, &raw),
            run_attacks(AttackModel::Ck8s, &governed, &raw),
        ];
        let table = render_attacks(&matrices);
        assert_eq!(table.lines().count(), 7);
        assert!(table.contains("Send email with confidential pricing"));
        assert!(table.contains("0/5"));
        assert!(table.contains("4/5"));
        assert!(table.contains("5/5"));
        let json = to_json(&matrices);
        assert!(json.contains("\"scenario\""));
    }
}
