//! Per-episode result rows, their aggregates and the CSV files.
//!
//! `results.csv`: `regime,seed,ue_id,mean_throughput_bps,best_objective`
//! with one row per (regime, seed, UE). `best_objective` is the best summed
//! throughput the UE's lease optimizer observed, empty when the UE had no
//! session.
//!
//! `aggregates.csv`: `regime,ue_id,seeds,mean_throughput_bps,std_throughput_bps`
//! with the sample standard deviation over seeds.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::config::Regime;

use super::stats::mean_std;

pub const RESULTS_HEADER: &str = "regime,seed,ue_id,mean_throughput_bps,best_objective";
pub const AGGREGATES_HEADER: &str = "regime,ue_id,seeds,mean_throughput_bps,std_throughput_bps";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub regime: Regime,
    pub seed: u64,
    pub ue_id: u32,
    pub mean_throughput_bps: f64,
    pub best_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub regime: Regime,
    pub ue_id: u32,
    pub seeds: usize,
    pub mean_throughput_bps: f64,
    pub std_throughput_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl ResultTable {
    /// Builds the aggregates from `rows`, keeping regimes in first-seen
    /// order and UEs ascending.
    pub fn from_rows(rows: Vec<ResultRow>) -> Self {
        let mut order: Vec<Regime> = Vec::new();
        let mut groups: BTreeMap<(usize, u32), Vec<f64>> = BTreeMap::new();
        for r in &rows {
            let pos = order
                .iter()
                .position(|x| *x == r.regime)
                .unwrap_or_else(|| {
                    order.push(r.regime);
                    order.len() - 1
                });
            groups
                .entry((pos, r.ue_id))
                .or_default()
                .push(r.mean_throughput_bps);
        }
        let aggregates = groups
            .into_iter()
            .map(|((pos, ue_id), values)| {
                let (mean, std) = mean_std(&values);
                AggregateRow {
                    regime: order[pos],
                    ue_id,
                    seeds: values.len(),
                    mean_throughput_bps: mean,
                    std_throughput_bps: std,
                }
            })
            .collect();
        Self { rows, aggregates }
    }

    pub fn regimes(&self) -> Vec<Regime> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.regime) {
                out.push(r.regime);
            }
        }
        out
    }

    pub fn ues(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.rows.iter().map(|r| r.ue_id).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn aggregate(&self, regime: Regime, ue: u32) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.regime == regime && a.ue_id == ue)
    }

    /// Per-seed values of `ue` under `regime`, in seed order.
    pub fn series(&self, regime: Regime, ue: u32) -> BTreeMap<u64, f64> {
        self.rows
            .iter()
            .filter(|r| r.regime == regime && r.ue_id == ue)
            .map(|r| (r.seed, r.mean_throughput_bps))
            .collect()
    }

    pub fn results_csv(&self) -> String {
        to_csv(&self.rows)
    }

    pub fn aggregates_csv(&self) -> String {
        to_csv(&self.aggregates)
    }

    pub fn parse_results(text: &str) -> Result<Self, csv::Error> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let rows = reader
            .deserialize()
            .collect::<Result<Vec<ResultRow>, _>>()?;
        Ok(Self::from_rows(rows))
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    let bytes = w
        .into_inner()
        .map_err(|e| io::Error::other(e.to_string()))
        .expect("in-memory writer");
    String::from_utf8(bytes).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(regime: Regime, seed: u64, ue_id: u32, t: f64) -> ResultRow {
        ResultRow {
            regime,
            seed,
            ue_id,
            mean_throughput_bps: t,
            best_objective: (ue_id == 1).then_some(2.0 * t),
        }
    }

    #[test]
    fn headers_are_fixed() {
        let t = ResultTable::from_rows(vec![row(Regime::Joint, 1, 1, 10.0)]);
        assert_eq!(t.results_csv().lines().next(), Some(RESULTS_HEADER));
        assert_eq!(t.aggregates_csv().lines().next(), Some(AGGREGATES_HEADER));
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let rows = vec![
            row(Regime::Joint, 1, 1, 10.0),
            row(Regime::Joint, 2, 1, 14.0),
            row(Regime::None, 1, 1, 3.0),
            row(Regime::Joint, 1, 2, 5.0),
        ];
        let t = ResultTable::from_rows(rows);
        let a = t.aggregate(Regime::Joint, 1).unwrap();
        assert_eq!((a.seeds, a.mean_throughput_bps), (2, 12.0));
        assert!((a.std_throughput_bps - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(t.regimes(), vec![Regime::Joint, Regime::None]);
        assert_eq!(t.aggregates.len(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let t = ResultTable::from_rows(vec![
            row(Regime::Partitioned, 3, 1, 1.0 / 3.0),
            row(Regime::Partitioned, 3, 2, 7e8),
        ]);
        let back = ResultTable::parse_results(&t.results_csv()).unwrap();
        assert_eq!(back, t);
        assert!(t.results_csv().contains("partitioned,3,2,700000000.0,\n"));
    }
}
