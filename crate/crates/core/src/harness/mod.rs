//! Experiment runner: episodes over regimes and seeds, result tables and
//! reports.

pub mod checks;
pub mod report;
pub mod stats;
pub mod table;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::build_scenario;
use crate::config::{Regime, ScenarioDocument};
use crate::control::{ControlError, ControlPlane, Loopback, Rcf};
use crate::par::{self, Execution};
use crate::ran::{rcf_config, run_episode, EpisodeReport, EpisodeSpec};

pub use checks::{spillover_checks, subscriber_checks, Check};
pub use report::{bar_chart_svg, emit_report};
pub use stats::{mean_std, sign_test, SignTest};
pub use table::{AggregateRow, ResultRow, ResultTable, AGGREGATES_HEADER, RESULTS_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Validation(String),
    #[error("cannot write `{path}`: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ScenarioDocument,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    pub budget: u64,
    pub out_dir: Option<PathBuf>,
    /// Also write each episode's event log, metric series and optimizer
    /// trajectories under `out_dir/episodes`.
    pub write_logs: bool,
}

impl ExperimentSpec {
    /// Takes regimes and budget from the document's episode section.
    pub fn from_document(scenario: ScenarioDocument, seeds: Vec<u64>) -> Self {
        Self {
            regimes: scenario.episode.regimes.clone(),
            budget: scenario.episode.budget,
            scenario,
            seeds,
            out_dir: None,
            write_logs: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if self.regimes.is_empty() {
            return bad("at least one regime is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.regimes.iter().collect::<BTreeSet<_>>().len() != self.regimes.len() {
            return bad("regimes repeat".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds repeat".into());
        }
        if self.write_logs && self.out_dir.is_none() {
            return bad("episode logs need an output directory".into());
        }
        build_scenario(&self.scenario, self.seeds[0])
            .map_err(|e| HarnessError::Validation(e.to_string()))?;
        Ok(())
    }

    fn episode(&self, regime: Regime, seed: u64) -> EpisodeSpec {
        let mut spec = EpisodeSpec::from_document(&self.scenario, regime, seed);
        spec.episode.budget = self.budget;
        spec
    }

    /// Every (regime, seed) pair, regimes outermost.
    pub fn grid(&self) -> Vec<(Regime, u64)> {
        self.regimes
            .iter()
            .flat_map(|&r| self.seeds.iter().map(move |&s| (r, s)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub regime: Regime,
    pub seed: u64,
    pub log_digest: String,
    pub events: usize,
    /// Every optimizer's best-so-far objective never decreased.
    pub best_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub regime: Regime,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub episodes: Vec<EpisodeSummary>,
    pub failures: Vec<EpisodeFailure>,
}

impl ExperimentOutput {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    complete: bool,
    regimes: Vec<Regime>,
    seeds: &'a [u64],
    budget: u64,
    failures: &'a [EpisodeFailure],
    episodes: &'a [EpisodeSummary],
    checks: Vec<Check>,
}

fn rows_of(report: &EpisodeReport) -> Vec<ResultRow> {
    report
        .eval_mean_bps
        .iter()
        .map(|(&ue, &t)| ResultRow {
            regime: report.regime,
            seed: report.seed,
            ue_id: ue.0,
            mean_throughput_bps: t,
            best_objective: report.best_objective(ue),
        })
        .collect()
}

fn io_err(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn write_episode_files(dir: &Path, report: &EpisodeReport) -> Result<(), HarnessError> {
    let stem = format!("{}-{}", report.regime, report.seed);
    let files = [
        (format!("{stem}.jsonl"), report.log.to_jsonl()),
        (format!("{stem}-series.csv"), report.log.series_csv()),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    }
    for (i, t) in report.trajectories.iter().enumerate() {
        let path = dir.join(format!("{stem}-trajectory-{i}.csv"));
        fs::write(&path, crate::optimizer::trajectory_csv(t)).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Builds the control plane an episode runs against.
pub type PlaneFactory = dyn Fn(&EpisodeSpec) -> Result<Box<dyn ControlPlane>, ControlError> + Sync;

/// The in-process control plane for one episode.
pub fn loopback_plane(spec: &EpisodeSpec) -> Result<Box<dyn ControlPlane>, ControlError> {
    Ok(Box::new(Loopback::new(Rcf::new(rcf_config(&spec.episode)))))
}

/// Runs every (regime, seed) episode against the in-process control plane.
pub fn run_experiment(
    spec: &ExperimentSpec,
    exec: Execution,
) -> Result<ExperimentOutput, HarnessError> {
    run_experiment_with(spec, exec, &loopback_plane)
}

/// Runs every (regime, seed) episode, each against a plane from
/// `make_plane`. Failed episodes are listed and leave no rows; writes the
/// report files when the spec names an output directory.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    exec: Execution,
    make_plane: &PlaneFactory,
) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let episode_dir = match (&spec.out_dir, spec.write_logs) {
        (Some(out), true) => {
            let dir = out.join("episodes");
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            Some(dir)
        }
        _ => None,
    };
    let grid = spec.grid();
    let results = par::map(exec, &grid, |&(regime, seed)| {
        let episode = spec.episode(regime, seed);
        let scenario = build_scenario(&spec.scenario, seed).map_err(|e| e.to_string())?;
        let mut plane = make_plane(&episode).map_err(|e| e.to_string())?;
        let report = run_episode(plane.as_mut(), &scenario, &episode).map_err(|e| e.to_string())?;
        if let Some(dir) = &episode_dir {
            write_episode_files(dir, &report).map_err(|e| e.to_string())?;
        }
        Ok::<_, String>((
            rows_of(&report),
            EpisodeSummary {
                regime,
                seed,
                log_digest: report.log.digest(),
                events: report.log.events.len(),
                best_monotone: report.trajectories.iter().all(|t| {
                    t.windows(2)
                        .all(|w| w[1].best_objective >= w[0].best_objective)
                }),
            },
        ))
    });

    let mut rows = Vec::new();
    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    for ((regime, seed), r) in grid.into_iter().zip(results) {
        match r {
            Ok((mut r, summary)) => {
                rows.append(&mut r);
                episodes.push(summary);
            }
            Err(error) => failures.push(EpisodeFailure {
                regime,
                seed,
                error,
            }),
        }
    }
    let output = ExperimentOutput {
        table: ResultTable::from_rows(rows),
        episodes,
        failures,
    };
    if let Some(out) = &spec.out_dir {
        write_outputs(spec, &output, out)?;
    }
    Ok(output)
}

/// Subscriber and spillover checks for the experiment's subscriptions.
pub fn experiment_checks(spec: &ExperimentSpec, table: &ResultTable) -> Vec<Check> {
    let regimes: BTreeSet<Regime> = spec.regimes.iter().copied().collect();
    if !regimes.contains(&Regime::None) || regimes.len() < 3 {
        return Vec::new();
    }
    let subs: Vec<u32> = spec.scenario.episode.subscriptions.clone();
    let others: Vec<u32> = table
        .ues()
        .into_iter()
        .filter(|u| !subs.contains(u))
        .collect();
    let mut checks = subscriber_checks(table, &subs);
    checks.extend(spillover_checks(table, &others));
    checks
}

fn write_outputs(
    spec: &ExperimentSpec,
    output: &ExperimentOutput,
    out: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    if !output.table.rows.is_empty() {
        emit_report(&output.table, out, false)?;
    }
    let summary = Summary {
        complete: output.is_complete(),
        regimes: spec.regimes.clone(),
        seeds: &spec.seeds,
        budget: spec.budget,
        failures: &output.failures,
        episodes: &output.episodes,
        checks: experiment_checks(spec, &output.table),
    };
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
}
