use std::net::SocketAddr;
use std::time::Duration;

use iraas_core::channel::build_scenario;
use iraas_core::config::{Regime, ScenarioDocument};
use iraas_core::control::{
    AckStatus, ControlError, ControlPlane, In1Message, Loopback, Rcf, RcfConfig, Registry,
    SessionOutcome, SessionRequest,
};
use iraas_core::em::ElementTuning;
use iraas_core::optimizer::{AllocationPolicy, RisId};
use iraas_core::ran::{audit_surface, descriptor, rcf_config, run_episode, EpisodeSpec, RIS_ID};
use iraas_core::UeId;
use iraas_service::{Remote, Server};

fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn start(rcf: Rcf) -> Server {
    Server::start(rcf, any_port(), any_port()).unwrap()
}

fn small_doc() -> ScenarioDocument {
    let mut doc = ScenarioDocument::default();
    doc.episode.budget = 5;
    doc.episode.eval_epochs = 6;
    doc.optimizer.averaging_epochs = 2;
    doc.optimizer.pilot_pairs = 2;
    doc
}

fn request(ue: u32, policy: AllocationPolicy) -> SessionRequest {
    SessionRequest {
        ue_id: UeId(ue),
        qos_request_bps: 2e9,
        policy,
        originator: Default::default(),
    }
}

#[test]
fn remote_episode_matches_loopback() {
    let doc = small_doc();
    for regime in [Regime::Partitioned, Regime::Joint] {
        let scenario = build_scenario(&doc, 3).unwrap();
        let spec = EpisodeSpec::from_document(&doc, regime, 3);

        let mut local = Loopback::new(Rcf::new(rcf_config(&spec.episode)));
        let want = run_episode(&mut local, &scenario, &spec).unwrap();

        let server = start(Rcf::new(rcf_config(&spec.episode)));
        let mut remote = Remote::connect(server.http_addr, server.stream_addr).unwrap();
        let got = run_episode(&mut remote, &scenario, &spec).unwrap();
        audit_surface(&mut remote, &RisId::from(RIS_ID)).unwrap();
        server.shared().rcf().audit().unwrap();

        assert_eq!(got.log.digest(), want.log.digest());
        assert_eq!(got.eval_mean_bps, want.eval_mean_bps);
    }
}

#[test]
fn errors_cross_the_wire_intact() {
    let scenario = build_scenario(&small_doc(), 1).unwrap();
    let server = start(Rcf::new(RcfConfig {
        subscribers: [UeId(1), UeId(3)].into(),
        ..Default::default()
    }));
    let mut c = Remote::connect(server.http_addr, server.stream_addr).unwrap();
    let ris = c.register_ris(descriptor(&scenario)).unwrap();
    assert!(matches!(
        c.register_ris(descriptor(&scenario)),
        Err(ControlError::Conflict(_))
    ));
    assert!(matches!(
        c.ris_state(&RisId::from("nope")),
        Err(ControlError::NotFound(_))
    ));
    assert!(matches!(
        c.terminate_session(iraas_core::control::SessionId(77)),
        Err(ControlError::NotFound(_))
    ));

    let SessionOutcome::Created { session } = c
        .create_session(request(1, AllocationPolicy::Partitioned))
        .unwrap()
    else {
        panic!("declined")
    };
    let t = ElementTuning::new(1.2e-12, 1.0).unwrap();
    let mine = In1Message::new(ris.clone(), 1, vec![0, 1], &[t, t]);
    assert_eq!(
        c.push_coefficients(&mine).unwrap().status,
        AckStatus::Applied
    );
    assert_eq!(c.push_coefficients(&mine).unwrap().status, AckStatus::Stale);
    let theirs = In1Message::new(ris.clone(), 2, vec![100], &[t]);
    assert!(matches!(
        c.push_coefficients(&theirs),
        Err(ControlError::Unauthorized(_))
    ));
    let mut forged = In1Message::new(ris.clone(), 3, vec![2], &[t]);
    forged.checksum = "00".repeat(32);
    assert!(matches!(
        c.push_coefficients(&forged),
        Err(ControlError::ChecksumMismatch)
    ));

    assert!(matches!(
        c.await_feedback("nobody", Duration::from_millis(20)),
        Err(ControlError::Timeout(_))
    ));
    c.report_progress(session.session_id, 3, Some(1e9)).unwrap();
    let report = c.terminate_session(session.session_id).unwrap();
    assert_eq!(c.terminate_session(session.session_id).unwrap(), report);
    assert_eq!(c.ris_state(&ris).unwrap().free(), 128);
}

#[test]
fn concurrent_clients_keep_the_registry_consistent() {
    let scenario = build_scenario(&small_doc(), 1).unwrap();
    let server = start(Rcf::new(RcfConfig {
        subscribers: (1..=4).map(UeId).collect(),
        ..Default::default()
    }));
    Remote::connect(server.http_addr, server.stream_addr)
        .unwrap()
        .register_ris(descriptor(&scenario))
        .unwrap();
    let (http, stream) = (server.http_addr, server.stream_addr);
    let workers: Vec<_> = (1..=4u32)
        .map(|ue| {
            std::thread::spawn(move || {
                let mut c = Remote::connect(http, stream).unwrap();
                let policy = if ue % 2 == 0 {
                    AllocationPolicy::Joint
                } else {
                    AllocationPolicy::Partitioned
                };
                for _ in 0..25 {
                    if let Ok(SessionOutcome::Created { session }) =
                        c.create_session(request(ue, policy))
                    {
                        let state = c.ris_state(&RisId::from(RIS_ID)).unwrap();
                        assert_eq!(state.leased() + state.free(), 128);
                        c.terminate_session(session.session_id).unwrap();
                    }
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    let rcf = server.shared().rcf();
    rcf.audit().unwrap();
    assert_eq!(rcf.ris_state(&RisId::from(RIS_ID)).unwrap().free(), 128);
}

#[test]
fn journaled_service_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.jsonl");
    let scenario = build_scenario(&small_doc(), 1).unwrap();
    let before = {
        let server = start(Rcf::with_registry(
            RcfConfig::default(),
            Registry::open(&path).unwrap(),
        ));
        let mut c = Remote::connect(server.http_addr, server.stream_addr).unwrap();
        let ris = c.register_ris(descriptor(&scenario)).unwrap();
        c.create_session(request(2, AllocationPolicy::Joint))
            .unwrap();
        let state = c.ris_state(&ris).unwrap();
        server.shutdown();
        state
    };
    let server = start(Rcf::with_registry(
        RcfConfig::default(),
        Registry::open(&path).unwrap(),
    ));
    let mut c = Remote::connect(server.http_addr, server.stream_addr).unwrap();
    assert_eq!(c.ris_state(&RisId::from(RIS_ID)).unwrap(), before);
}
