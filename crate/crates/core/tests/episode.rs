use std::collections::BTreeSet;

use iraas_core::channel::{build_scenario, EpochChannels, Scenario};
use iraas_core::config::{Regime, ScenarioDocument};
use iraas_core::control::{Loopback, Rcf};
use iraas_core::optimizer::RisId;
use iraas_core::ran::{
    audit_surface, check_workflow, rcf_config, run_episode, EpisodeError, EpisodeLayout,
    EpisodeReport, EpisodeSpec, EventKind, RIS_ID,
};
use iraas_core::UeId;

fn small_doc() -> ScenarioDocument {
    let mut doc = ScenarioDocument::default();
    doc.episode.budget = 6;
    doc.episode.eval_epochs = 12;
    doc.optimizer.averaging_epochs = 2;
    doc.optimizer.pilot_pairs = 2;
    doc
}

fn run(doc: &ScenarioDocument, regime: Regime, seed: u64) -> (Scenario, EpisodeReport) {
    let scenario = build_scenario(doc, seed).unwrap();
    let spec = EpisodeSpec::from_document(doc, regime, seed);
    let mut plane = Loopback::new(Rcf::new(rcf_config(&spec.episode)));
    let report = run_episode(&mut plane, &scenario, &spec).unwrap();
    audit_surface(&mut plane, &RisId::from(RIS_ID)).unwrap();
    (scenario, report)
}

/// Per-UE eval means computed straight from the channel model.
fn direct_eval(
    scenario: &Scenario,
    doc: &ScenarioDocument,
    regime: Regime,
    reset_panel: bool,
) -> Vec<f64> {
    let spec = EpisodeSpec::from_document(doc, regime, 0);
    let layout = EpisodeLayout::new(&spec);
    let panel = reset_panel.then(|| scenario.reset_panel());
    let mut sums = vec![0.0; scenario.ue_count()];
    for e in layout.eval_start()..layout.eval_start() + layout.eval {
        let m = EpochChannels::compute(scenario, e)
            .unwrap()
            .metrics(scenario, panel.as_ref())
            .unwrap();
        for (i, ue) in scenario.ue_ids().enumerate() {
            sums[i] += m.throughput(ue).unwrap();
        }
    }
    sums.iter().map(|s| s / layout.eval as f64).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

#[test]
fn no_surface_matches_the_bare_channel() {
    let doc = small_doc();
    let (scenario, report) = run(&doc, Regime::None, 3);
    let direct = direct_eval(&scenario, &doc, Regime::None, false);
    for (got, want) in report.eval_mean_bps.values().zip(&direct) {
        assert!(close(*got, *want), "{got} vs {want}");
    }
    assert!(report
        .log
        .events
        .iter()
        .all(|e| e.kind == EventKind::Feedback));
    assert!(report.sessions.is_empty() && report.trajectories.is_empty());
}

#[test]
fn without_subscribers_every_regime_matches_no_surface() {
    let mut doc = small_doc();
    doc.episode.subscriptions.clear();
    let (_, none) = run(&doc, Regime::None, 5);
    for regime in [Regime::Partitioned, Regime::Joint] {
        let (_, r) = run(&doc, regime, 5);
        assert_eq!(r.eval_mean_bps, none.eval_mean_bps);
        assert!(r.log.events.iter().all(|e| e.kind == EventKind::Feedback));
    }
}

#[test]
fn zero_budget_leaves_the_panel_at_reset() {
    let mut doc = small_doc();
    doc.episode.budget = 0;
    let (scenario, report) = run(&doc, Regime::Joint, 2);
    assert!(report.sessions.iter().any(|s| s.session.is_some()));
    let direct = direct_eval(&scenario, &doc, Regime::Joint, true);
    for (got, want) in report.eval_mean_bps.values().zip(&direct) {
        assert!(close(*got, *want), "{got} vs {want}");
    }
}

#[test]
fn episodes_are_deterministic() {
    let doc = small_doc();
    let (_, a) = run(&doc, Regime::Joint, 9);
    let (_, b) = run(&doc, Regime::Joint, 9);
    assert_eq!(a.log.digest(), b.log.digest());
    assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
    assert_eq!(a.eval_mean_bps, b.eval_mean_bps);
    let (_, c) = run(&doc, Regime::Joint, 10);
    assert_ne!(a.log.digest(), c.log.digest());
}

#[test]
fn probe_tags_thread_through_the_series() {
    let doc = small_doc();
    let (_, report) = run(&doc, Regime::Partitioned, 4);
    let m = doc.optimizer.averaging_epochs as usize;
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for p in &report.log.series {
        if let Some(tag) = &p.probe_tag {
            assert!(tag.starts_with("partitioned-4/"), "{tag}");
            *counts.entry(tag).or_default() += 1;
        }
    }
    assert!(!counts.is_empty());
    assert!(counts.values().all(|&c| c == m), "{counts:?}");
    // all leases are probed together: one pair per pilot and per iteration
    assert_eq!(report.trajectories.len(), 2);
    let pairs = doc.optimizer.pilot_pairs as usize + doc.episode.budget as usize;
    assert_eq!(counts.len(), 2 * pairs);
}

#[test]
fn bystanders_are_observed_but_never_served() {
    let doc = small_doc();
    let subs: BTreeSet<UeId> = doc.episode.subscriptions.iter().map(|&u| UeId(u)).collect();
    for regime in [Regime::Partitioned, Regime::Joint] {
        let (scenario, report) = run(&doc, regime, 6);
        let all: Vec<UeId> = scenario.ue_ids().collect();
        for e in &report.log.events {
            match e.kind {
                EventKind::Feedback => assert_eq!(e.ues, all),
                _ => assert!(e.ues.iter().all(|u| subs.contains(u)), "{e:?}"),
            }
        }
        for s in &report.sessions {
            assert!(subs.contains(&s.ue_id));
            assert!(s.session.is_none() || s.closure.is_some());
        }
        check_workflow(&report.log, &all).unwrap();
    }
}

#[test]
fn invalid_specs_are_rejected_before_anything_runs() {
    let doc = small_doc();
    let scenario = build_scenario(&doc, 1).unwrap();
    let mut spec = EpisodeSpec::from_document(&doc, Regime::Joint, 1);
    spec.episode.window = 0;
    let mut plane = Loopback::new(Rcf::new(rcf_config(&spec.episode)));
    assert!(matches!(
        run_episode(&mut plane, &scenario, &spec),
        Err(EpisodeError::Invalid(_))
    ));
    assert!(plane.rcf().sessions().next().is_none());
}
