//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! a criterion fails that is not listed in `KNOWN_RED`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use iraas_core::channel::{build_scenario, sample_paths, LinkId, MetricsSample, UeMetrics};
use iraas_core::config::{OptimizerConfig, Regime, ScenarioDocument, Termination};
use iraas_core::control::{
    AckStatus, ControlError, In1Ack, In1Message, In2Message, Loopback, Rcf, RcfConfig,
    RisDescriptor, SessionOutcome, SessionRequest, UeRecord, WIRE_VERSION,
};
use iraas_core::em::{
    element_impedance, reflection_coefficient, AngularFrequency, CircuitConstants, ElementTuning,
    CAPACITANCE_MAX, CAPACITANCE_MIN,
};
use iraas_core::harness::{
    run_experiment, spillover_checks, subscriber_checks, ExperimentOutput, ExperimentSpec,
};
use iraas_core::optimizer::{
    optimize, AllocationLease, AllocationPolicy, FeedbackChannel, FeedbackError, GainSchedule,
    LeaseId, LeaseOptimizer, LeaseState, LeaseUpdate, MeasurementRequest, OptimizeSettings,
    OptimizerState, RisId,
};
use iraas_core::par::Execution;
use iraas_core::ran::{
    audit_surface, check_workflow, rcf_config, run_episode, EpisodeSpec, RIS_ID,
};
use iraas_core::rng::{stream, Purpose};
use iraas_core::UeId;

/// Criteria expected to fail on this model.
const KNOWN_RED: &[u32] = &[4];

const PF: f64 = 1e-12;

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

fn timed(
    id: u32,
    title: &'static str,
    limit: Duration,
    f: impl FnOnce() -> (bool, String),
) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    let elapsed = t.elapsed();
    Outcome {
        id,
        title,
        pass: pass && elapsed <= limit,
        detail,
        elapsed,
        limit,
    }
}

fn print(o: &Outcome) {
    println!(
        "criterion {} {} {}: {} [{:.2?} of {:?}]",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.title,
        o.detail,
        o.elapsed,
        o.limit
    );
}

fn c_grid() -> Vec<f64> {
    (0..256)
        .map(|i| CAPACITANCE_MIN + (CAPACITANCE_MAX - CAPACITANCE_MIN) * i as f64 / 255.0)
        .collect()
}

fn frequencies() -> Vec<f64> {
    let s = build_scenario(&ScenarioDocument::default(), 1).unwrap();
    s.frequency_plan
        .iter()
        .take(3)
        .map(|b| b.center_hz)
        .collect()
}

fn passivity() -> (bool, String) {
    let k = CircuitConstants::default();
    let (mut worst_passive, mut worst_lossless) = (0.0f64, 0.0f64);
    for f in frequencies() {
        for c in c_grid() {
            for r in [0.0, 1.0] {
                let v = reflection_coefficient(
                    &ElementTuning::new(c, r).unwrap(),
                    &k,
                    AngularFrequency::from_hz(f),
                )
                .unwrap()
                .norm();
                worst_passive = worst_passive.max(v - 1.0);
                if r == 0.0 {
                    worst_lossless = worst_lossless.max((v - 1.0).abs());
                }
            }
        }
    }
    (
        worst_passive <= 1e-12 && worst_lossless < 1e-12,
        format!("max |v|-1 = {worst_passive:.2e}, max ||v|-1| at R=0 = {worst_lossless:.2e}"),
    )
}

/// Straight-line impedance: the parallel combination written out in real
/// and imaginary parts.
fn oracle(c: f64, r: f64, f: f64) -> (Complex64, Complex64) {
    let (l1, l2, z0) = (2.5e-9, 0.7e-9, 377.0);
    let w = 2.0 * std::f64::consts::PI * f;
    let x1 = w * l1;
    let x2 = w * l2 - 1.0 / (w * c);
    // a = j*x1, b = r + j*x2; z = a*b / (a + b)
    let num_re = -x1 * x2;
    let num_im = x1 * r;
    let den_re = r;
    let den_im = x1 + x2;
    let den = den_re * den_re + den_im * den_im;
    let z = Complex64::new(
        (num_re * den_re + num_im * den_im) / den,
        (num_im * den_re - num_re * den_im) / den,
    );
    let (a, b) = (
        Complex64::new(z.re - z0, z.im),
        Complex64::new(z.re + z0, z.im),
    );
    let d = b.re * b.re + b.im * b.im;
    let v = Complex64::new(
        (a.re * b.re + a.im * b.im) / d,
        (a.im * b.re - a.re * b.im) / d,
    );
    (z, v)
}

fn formula_oracle() -> (bool, String) {
    let k = CircuitConstants::default();
    let mut worst = 0.0f64;
    for f in frequencies() {
        for c in c_grid() {
            for r in [0.0, 1.0] {
                let t = ElementTuning::new(c, r).unwrap();
                let w = AngularFrequency::from_hz(f);
                let z = element_impedance(&t, &k, w).unwrap();
                let v = reflection_coefficient(&t, &k, w).unwrap().value();
                let (zo, vo) = oracle(c, r, f);
                worst = worst
                    .max((z - zo).norm() / zo.norm())
                    .max((v - vo).norm() / vo.norm());
            }
        }
    }
    (worst <= 1e-9, format!("max relative error {worst:.2e}"))
}

fn blockage() -> (bool, String) {
    let s = build_scenario(&ScenarioDocument::default(), 1).unwrap();
    let epochs = 10_000u64;
    let rate = |link| {
        (0..epochs)
            .filter(|&e| sample_paths(&s, link, e).unwrap().link_blocked)
            .count() as f64
            / epochs as f64
    };
    let mut rates = Vec::new();
    let mut ok = true;
    for u in 0..s.ue_count() {
        for (name, link) in [("bs-ue", LinkId::BsUe(u)), ("ris-ue", LinkId::RisUe(u))] {
            let r = rate(link);
            ok &= (0.285..=0.315).contains(&r);
            rates.push(format!("{name}{} {r:.4}", u + 1));
        }
    }
    let bs_ris = rate(LinkId::BsRis);
    ok &= bs_ris == 0.0;
    rates.push(format!("bs-ris {bs_ris}"));
    (ok, rates.join(", "))
}

fn ordering_spec() -> ExperimentSpec {
    let mut doc = ScenarioDocument::default();
    doc.optimizer.averaging_epochs = 4;
    doc.episode.budget = 500;
    doc.episode.subscriptions = vec![1, 3];
    let mut spec = ExperimentSpec::from_document(doc, (1..=20).collect());
    spec.regimes = vec![Regime::None, Regime::Partitioned, Regime::Joint];
    spec
}

fn summarize(checks: &[iraas_core::harness::Check]) -> (bool, String) {
    let pass = checks.iter().all(|c| c.pass);
    let detail = checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: {}",
                if c.pass { "ok" } else { "NO" },
                c.name,
                c.detail
            )
        })
        .collect::<Vec<_>>()
        .join(" | ");
    (pass, detail)
}

fn subscriber_ordering(out: &ExperimentOutput) -> (bool, String) {
    if !out.is_complete() {
        return (false, format!("episode failures: {:?}", out.failures));
    }
    summarize(&subscriber_checks(&out.table, &[1, 3]))
}

fn bystander_spillover(out: &ExperimentOutput) -> (bool, String) {
    summarize(&spillover_checks(&out.table, &[2, 4]))
}

/// Separable concave objective: each element has its own optimum inside
/// the box.
struct Bowl {
    panel: Vec<f64>,
    targets: Vec<f64>,
}

impl Bowl {
    fn score(&self) -> f64 {
        self.panel
            .iter()
            .zip(&self.targets)
            .map(|(c, t)| 1.0 - ((c - t) / PF).powi(2))
            .sum()
    }

    fn apply(&mut self, updates: &[LeaseUpdate]) {
        for u in updates {
            for (&i, t) in u.indices.iter().zip(&u.tunings) {
                self.panel[i] = t.capacitance;
            }
        }
    }

    fn grid_optimum(&self) -> f64 {
        let grid: Vec<f64> = (0..1024)
            .map(|i| CAPACITANCE_MIN + (CAPACITANCE_MAX - CAPACITANCE_MIN) * i as f64 / 1023.0)
            .collect();
        self.targets
            .iter()
            .map(|t| {
                grid.iter()
                    .map(|g| 1.0 - ((g - t) / PF).powi(2))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }
}

impl FeedbackChannel for Bowl {
    fn measure(&mut self, request: &MeasurementRequest) -> Result<MetricsSample, FeedbackError> {
        self.apply(&request.updates);
        Ok(MetricsSample {
            epoch: 0,
            ues: vec![UeMetrics {
                ue_id: UeId(1),
                throughput_bps: self.score(),
                sinr_db: 0.0,
                band_center_hz: 2.4e9,
            }],
        })
    }

    fn commit(&mut self, updates: &[LeaseUpdate]) -> Result<(), FeedbackError> {
        self.apply(updates);
        Ok(())
    }
}

fn optimizer_sanity(out: &ExperimentOutput) -> (bool, String) {
    let cfg = OptimizerConfig::default();
    let budget = 500u64;
    let (mut within, mut monotone, mut total) = (0, 0, 0);
    for seed in 0..20u64 {
        let mut rng = stream(seed, Purpose::Synthetic, 6, 0);
        let targets: Vec<f64> = (0..8).map(|_| rng.random_range(0.7..2.1) * PF).collect();
        let mut bowl = Bowl {
            panel: vec![1.41 * PF; 8],
            targets,
        };
        let schedule = GainSchedule {
            a: cfg.a,
            c: cfg.c,
            stability: cfg.stability_fraction * budget as f64,
            alpha: cfg.alpha,
            gamma: cfg.gamma,
        };
        let mut tasks = vec![LeaseOptimizer {
            lease: AllocationLease {
                lease_id: LeaseId(0),
                ris_id: RisId::from("bowl"),
                element_indices: (0..8).collect(),
                beneficiary_ues: BTreeSet::from([UeId(1)]),
                policy: AllocationPolicy::Joint,
                state: LeaseState::Active,
            },
            state: OptimizerState::new(8, schedule, 7000 + seed, 1.0).unwrap(),
        }];
        let settings = OptimizeSettings {
            budget,
            tag_namespace: format!("bowl{seed}"),
            pilot_pairs: cfg.pilot_pairs,
            first_step: 4.0 * cfg.first_step_fraction,
            max_timeouts: 0,
        };
        let outcome = optimize(&mut tasks, &mut bowl, &settings).unwrap();
        let optimum = bowl.grid_optimum();
        if bowl.score() >= optimum - 0.05 * optimum.abs() {
            within += 1;
        }
        total += 1;
        if outcome.trajectories[0]
            .windows(2)
            .all(|w| w[1].best_objective >= w[0].best_objective)
        {
            monotone += 1;
        }
    }
    let episodes = out.episodes.len();
    let episodes_monotone = out.episodes.iter().filter(|e| e.best_monotone).count();
    (
        within >= 18 && monotone == total && episodes_monotone == episodes,
        format!(
            "{within}/20 synthetic runs within 5% of grid optimum; best-so-far monotone in {monotone}/{total} synthetic and {episodes_monotone}/{episodes} episodes"
        ),
    )
}

fn workflow_conformance() -> (bool, String) {
    let regimes = [Regime::None, Regime::Partitioned, Regime::Joint];
    let cases: Vec<u64> = (0..100).collect();
    let results = iraas_core::par::map(Execution::Parallel, &cases, |&i| {
        let mut rng = stream(77, Purpose::Fuzz, 7, i);
        let mut doc = ScenarioDocument::default();
        let mut subs: Vec<u32> = (1..=4).filter(|_| rng.random_bool(0.5)).collect();
        subs.shuffle(&mut rng);
        doc.episode.subscriptions = subs;
        doc.episode.budget = rng.random_range(0..=6);
        doc.episode.window = rng.random_range(2..=10);
        doc.episode.eval_epochs = rng.random_range(3..=15);
        doc.episode.qos_target_bps = [0.5e9, 0.9e9, 1.0e9, 2.0e9][rng.random_range(0..4)];
        if rng.random_bool(0.5) {
            doc.episode.termination = Termination::Degradation;
            doc.episode.degradation_floor_bps = rng.random_range(0.0..1.2e9);
        }
        doc.optimizer.averaging_epochs = rng.random_range(1..=3);
        doc.optimizer.pilot_pairs = rng.random_range(0..=2);
        let regime = regimes[rng.random_range(0..3)];
        let seed = rng.random_range(1..1000);
        let scenario = build_scenario(&doc, seed).map_err(|e| e.to_string())?;
        let spec = EpisodeSpec::from_document(&doc, regime, seed);
        let mut plane = Loopback::new(Rcf::new(rcf_config(&doc.episode)));
        let report =
            run_episode(&mut plane, &scenario, &spec).map_err(|e| format!("case {i}: {e}"))?;
        let ues: Vec<UeId> = scenario.ue_ids().collect();
        check_workflow(&report.log, &ues).map_err(|e| format!("case {i}: {e}"))?;
        audit_surface(&mut plane, &RisId::from(RIS_ID)).map_err(|e| format!("case {i}: {e}"))?;
        plane.rcf().audit().map_err(|e| format!("case {i}: {e}"))?;
        Ok::<_, String>((
            report.log.count(iraas_core::ran::EventKind::ServiceRequest),
            report.log.count(iraas_core::ran::EventKind::Decline),
        ))
    });
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let (requests, declines) = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold((0, 0), |(a, b), (r, d)| (a + r, b + d));
    (
        failures.is_empty(),
        match failures.first() {
            None => format!("100/100 episodes conform and audit clean ({requests} requests, {declines} declined)"),
            Some(f) => format!("{} failures, first: {f}", failures.len()),
        },
    )
}

fn random_text(rng: &mut impl Rng) -> String {
    let alphabet: Vec<char> = "abcXYZ019-_/+ \"\\é✓{}".chars().collect();
    let n = rng.random_range(1..12);
    (0..n)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect()
}

fn random_tuning(rng: &mut impl Rng) -> ElementTuning {
    ElementTuning::new(
        rng.random_range(CAPACITANCE_MIN..=CAPACITANCE_MAX),
        rng.random_range(0.0..5.0),
    )
    .unwrap()
}

fn descriptor() -> RisDescriptor {
    RisDescriptor {
        ris_id: RisId::from(RIS_ID),
        location: [0.0, 0.0, 3.0],
        orientation: [0.0, 1.0, 0.0],
        array_size: (8, 16),
        phase_quantization_level: 0,
        owner_tag: String::new(),
        constants: CircuitConstants::default(),
        resistance_ohm: 1.0,
    }
}

fn protocol_robustness() -> (bool, String) {
    let mut rng = stream(88, Purpose::Fuzz, 8, 0);
    let n = 10_000;
    let mut mismatches = 0;
    for _ in 0..n {
        let len = rng.random_range(1..20);
        let mut indices: Vec<usize> = (0..128).collect();
        indices.shuffle(&mut rng);
        indices.truncate(len);
        let tunings: Vec<ElementTuning> = (0..len).map(|_| random_tuning(&mut rng)).collect();
        let in1 = In1Message::new(
            RisId(random_text(&mut rng)),
            rng.random(),
            indices,
            &tunings,
        );
        mismatches += usize::from(In1Message::decode(&in1.encode()).ok() != Some(in1));

        let status =
            [AckStatus::Applied, AckStatus::Stale, AckStatus::Rejected][rng.random_range(0..3)];
        let reason = rng.random_bool(0.5).then(|| random_text(&mut rng));
        let ack = In1Ack::new(RisId(random_text(&mut rng)), rng.random(), status, reason);
        mismatches += usize::from(In1Ack::decode(&ack.encode()).ok() != Some(ack));

        let ues = (0..rng.random_range(1..8))
            .map(|i| UeRecord {
                ue_id: UeId(i + 1),
                throughput_bps: rng.random_range(0.0..1e10),
                sinr_db: rng.random_range(-50.0..60.0),
                band_center_hz: rng.random_range(1e9..1e11),
            })
            .collect();
        let in2 = In2Message {
            v: WIRE_VERSION,
            epoch: rng.random(),
            probe_tag: rng.random_bool(0.5).then(|| random_text(&mut rng)),
            ues,
        };
        mismatches += usize::from(In2Message::decode(&in2.encode()).ok() != Some(in2));
    }

    let mut rcf = Rcf::new(RcfConfig {
        subscribers: [UeId(1), UeId(3)].into(),
        ..Default::default()
    });
    rcf.register_ris(descriptor()).unwrap();
    let session = rcf
        .create_session(SessionRequest {
            ue_id: UeId(1),
            qos_request_bps: 2e9,
            policy: AllocationPolicy::Partitioned,
            originator: Default::default(),
        })
        .unwrap();
    assert!(matches!(session, SessionOutcome::Created { .. }));
    let ris = RisId::from(RIS_ID);
    let last = 10;
    let ok = In1Message::new(
        ris.clone(),
        last,
        (0..64).collect(),
        &vec![random_tuning(&mut rng); 64],
    );
    assert_eq!(
        rcf.push_coefficients(&ok).unwrap().status,
        AckStatus::Applied
    );
    let snapshot = rcf.registry().clone();

    let (mut mutations, mut wrong) = (0, 0);
    for i in 0..1000u64 {
        let len = rng.random_range(1..10);
        let tunings: Vec<ElementTuning> = (0..len).map(|_| random_tuning(&mut rng)).collect();
        let in_lease = || -> Vec<usize> {
            let mut v: Vec<usize> = (0..64).collect();
            v.shuffle(&mut stream(i, Purpose::Fuzz, 9, 0));
            v.truncate(len);
            v
        };
        let (msg, expect_ok_stale) = match i % 3 {
            0 => {
                let mut idx = in_lease();
                idx[0] = rng.random_range(64..200);
                idx.dedup();
                let tunings = &tunings[..idx.len()];
                (
                    In1Message::new(ris.clone(), last + 1 + i, idx, tunings),
                    false,
                )
            }
            1 => {
                let mut m = In1Message::new(ris.clone(), last + 1 + i, in_lease(), &tunings);
                match rng.random_range(0..3) {
                    0 => m.seq += 1,
                    1 => m.capacitance_pf[0] = (m.capacitance_pf[0] + 0.01).min(2.35),
                    _ => m.checksum = format!("{:016x}", rng.random::<u64>()),
                }
                (m, false)
            }
            _ => (
                In1Message::new(
                    ris.clone(),
                    rng.random_range(0..=last),
                    in_lease(),
                    &tunings,
                ),
                true,
            ),
        };
        let wire = In1Message::decode(&msg.encode());
        let result = match wire {
            Ok(m) => rcf.push_coefficients(&m),
            Err(e) => Err(ControlError::from(e)),
        };
        match (&result, expect_ok_stale) {
            (Ok(ack), true) if ack.status == AckStatus::Stale => {}
            (Err(_), false) => {}
            _ => wrong += 1,
        }
        if rcf.registry() != &snapshot {
            mutations += 1;
        }
    }
    (
        mismatches == 0 && mutations == 0 && wrong == 0,
        format!(
            "{n} round trips per message type, {mismatches} mismatches; 1000 adversarial updates, {mutations} mutations, {wrong} unexpected responses"
        ),
    )
}

fn determinism() -> (bool, String) {
    let mut spec = ordering_spec();
    spec.seeds = vec![1];
    let a = run_experiment(&spec, Execution::Sequential).unwrap();
    let b = run_experiment(&spec, Execution::Parallel).unwrap();
    let same = a.table.results_csv() == b.table.results_csv()
        && a.table.aggregates_csv() == b.table.aggregates_csv()
        && a.episodes == b.episodes;
    (
        same && a.is_complete(),
        format!(
            "sequential and parallel runs: results.csv {} bytes, identical = {same}",
            a.table.results_csv().len()
        ),
    )
}

fn main() {
    let mut outcomes = vec![
        timed(
            1,
            "passivity and losslessness",
            Duration::from_secs(1),
            passivity,
        ),
        timed(
            2,
            "element formula oracle",
            Duration::from_secs(1),
            formula_oracle,
        ),
        timed(3, "blockage statistics", Duration::from_secs(10), blockage),
    ];
    for o in &outcomes {
        print(o);
    }

    let t = Instant::now();
    let experiment = run_experiment(&ordering_spec(), Execution::Parallel).unwrap();
    let run_time = t.elapsed();
    let mut o4 = timed(4, "subscriber ordering", Duration::from_secs(600), || {
        subscriber_ordering(&experiment)
    });
    o4.elapsed += run_time;
    o4.pass &= o4.elapsed <= o4.limit;
    let rest = [
        o4,
        timed(
            5,
            "non-subscriber spillover",
            Duration::from_secs(1),
            || bystander_spillover(&experiment),
        ),
        timed(6, "optimizer sanity", Duration::from_secs(30), || {
            optimizer_sanity(&experiment)
        }),
        timed(
            7,
            "workflow conformance",
            Duration::from_secs(60),
            workflow_conformance,
        ),
        timed(
            8,
            "protocol robustness",
            Duration::from_secs(30),
            protocol_robustness,
        ),
        timed(9, "determinism", Duration::from_secs(60), determinism),
    ];
    for o in rest {
        print(&o);
        outcomes.push(o);
    }

    let passed = outcomes.iter().filter(|o| o.pass).count();
    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_RED.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let red: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {passed}/{} criteria pass; failing: {red:?}; known red: {KNOWN_RED:?}",
        outcomes.len()
    );
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
}
