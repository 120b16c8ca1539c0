//! Ordering checks over a finished experiment.

use serde::{Deserialize, Serialize};

use crate::config::Regime;

use super::stats::{sign_test, SignTest};
use super::table::ResultTable;

/// Significance for subscriber orderings.
pub const SUBSCRIBER_ALPHA: f64 = 0.05;
/// Significance for non-subscriber spillover.
pub const SPILLOVER_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn paired(table: &ResultTable, a: Regime, b: Regime, ues: &[u32]) -> Option<(Vec<f64>, Vec<f64>)> {
    let sum = |regime| {
        let mut total = std::collections::BTreeMap::<u64, f64>::new();
        for &ue in ues {
            for (seed, v) in table.series(regime, ue) {
                *total.entry(seed).or_default() += v;
            }
        }
        total
    };
    let (sa, sb) = (sum(a), sum(b));
    let seeds: Vec<u64> = sa.keys().filter(|s| sb.contains_key(s)).copied().collect();
    if seeds.is_empty() {
        return None;
    }
    Some((
        seeds.iter().map(|s| sa[s]).collect(),
        seeds.iter().map(|s| sb[s]).collect(),
    ))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn describe(t: &SignTest) -> String {
    format!(
        "{}/{} wins, {} ties, p = {:.4}",
        t.wins,
        t.wins + t.losses,
        t.ties,
        t.p_value
    )
}

/// Mean ordering `a > b` (or `>=`) over the summed throughput of `ues`,
/// plus a one-sided sign test at `alpha`.
fn ordering(
    table: &ResultTable,
    name: &str,
    a: Regime,
    b: Regime,
    ues: &[u32],
    strict: bool,
    alpha: f64,
) -> Check {
    let Some((x, y)) = paired(table, a, b, ues) else {
        return Check {
            name: name.to_string(),
            pass: false,
            detail: format!("no paired seeds for {a} and {b}"),
        };
    };
    let (ma, mb) = (mean(&x), mean(&y));
    let means_ok = if strict { ma > mb } else { ma >= mb };
    let t = sign_test(&x, &y);
    Check {
        name: name.to_string(),
        pass: means_ok && t.p_value < alpha,
        detail: format!(
            "mean {:.2} vs {:.2} Mbit/s; {} (alpha {alpha})",
            ma / 1e6,
            mb / 1e6,
            describe(&t)
        ),
    }
}

/// Subscriber checks: the joint surface beats the partitioned one, which
/// beats no surface, on the subscribers' summed throughput, and the joint
/// surface beats the partitioned one for every subscriber on its own.
pub fn subscriber_checks(table: &ResultTable, subscribers: &[u32]) -> Vec<Check> {
    let mut checks = vec![
        ordering(
            table,
            "joint > partitioned (sum)",
            Regime::Joint,
            Regime::Partitioned,
            subscribers,
            true,
            SUBSCRIBER_ALPHA,
        ),
        ordering(
            table,
            "partitioned > none (sum)",
            Regime::Partitioned,
            Regime::None,
            subscribers,
            true,
            SUBSCRIBER_ALPHA,
        ),
    ];
    for &ue in subscribers {
        checks.push(ordering(
            table,
            &format!("joint > partitioned (UE {ue})"),
            Regime::Joint,
            Regime::Partitioned,
            &[ue],
            true,
            SUBSCRIBER_ALPHA,
        ));
    }
    checks
}

/// Non-subscribers do no worse than with no surface under either regime.
pub fn spillover_checks(table: &ResultTable, bystanders: &[u32]) -> Vec<Check> {
    let mut checks = Vec::new();
    for regime in [Regime::Partitioned, Regime::Joint] {
        for &ue in bystanders {
            checks.push(ordering(
                table,
                &format!("{regime} >= none (UE {ue})"),
                regime,
                Regime::None,
                &[ue],
                false,
                SPILLOVER_ALPHA,
            ));
        }
    }
    checks
}
