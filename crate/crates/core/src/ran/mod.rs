//! Simulated gNB and UEs: they watch their throughput, ask for the service
//! when it falls short, measure the network and report feedback.

pub mod episode;
pub mod log;

use crate::channel::scenario::Point;
use crate::channel::{Band, MetricsSample, Scenario};
use crate::control::wire::{In2Message, WireError};
use crate::UeId;

pub use episode::{
    audit_surface, descriptor, rcf_config, run_episode, EpisodeError, EpisodeLayout, EpisodeReport,
    EpisodeSpec, SessionSummary, RIS_ID,
};
pub use log::{check_workflow, EpisodeHeader, EpisodeLog, Event, EventKind, SeriesPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct UeAgent {
    pub ue_id: UeId,
    pub subscribed: bool,
    pub qos_target_bps: f64,
    pub band: Band,
    pub position: Point,
}

/// One agent per scenario UE. Subscriptions naming a UE the scenario does
/// not have are rejected.
pub fn agents(
    scenario: &Scenario,
    subscriptions: &[u32],
    qos_target_bps: f64,
) -> Result<Vec<UeAgent>, String> {
    if let Some(&bad) = subscriptions
        .iter()
        .find(|&&u| scenario.ue_index(UeId(u)).is_none())
    {
        return Err(format!(
            "subscription names UE {bad}, scenario has {}",
            scenario.ue_count()
        ));
    }
    Ok(scenario
        .ue_ids()
        .zip(&scenario.ue_positions)
        .zip(&scenario.frequency_plan)
        .map(|((ue_id, &position), &band)| UeAgent {
            ue_id,
            subscribed: subscriptions.contains(&ue_id.0),
            qos_target_bps,
            band,
            position,
        })
        .collect())
}

/// Whether the mean throughput over the last `window` samples is below the
/// agent's target. `None` when fewer than `window` samples carry the UE.
pub fn detect_degradation(
    agent: &UeAgent,
    samples: &[MetricsSample],
    window: usize,
) -> Option<bool> {
    if window == 0 {
        return None;
    }
    let values: Vec<f64> = samples
        .iter()
        .rev()
        .filter_map(|s| s.throughput(agent.ue_id))
        .take(window)
        .collect();
    (values.len() == window)
        .then(|| values.iter().sum::<f64>() / (window as f64) < agent.qos_target_bps)
}

/// Builds the RAN's report for `epoch`. Every UE in `ues` must be present;
/// UEs are reported whether or not they subscribe.
pub fn publish_feedback(
    epoch: u64,
    metrics: &MetricsSample,
    probe_tag: Option<&str>,
    ues: &[UeId],
) -> Result<In2Message, WireError> {
    if let Some(missing) = ues.iter().find(|&&u| metrics.throughput(u).is_none()) {
        return Err(WireError::Invalid(format!("no metrics for UE {missing}")));
    }
    let mut msg = In2Message::from_metrics(metrics, probe_tag.map(str::to_string));
    msg.epoch = epoch;
    msg.validate()?;
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_scenario, UeMetrics};
    use crate::config::ScenarioDocument;

    fn sample(epoch: u64, t: f64) -> MetricsSample {
        MetricsSample {
            epoch,
            ues: (1..=4)
                .map(|u| UeMetrics {
                    ue_id: UeId(u),
                    throughput_bps: t * u as f64,
                    sinr_db: 1.0,
                    band_center_hz: 2.4e9,
                })
                .collect(),
        }
    }

    fn agent(target: f64) -> UeAgent {
        UeAgent {
            ue_id: UeId(1),
            subscribed: true,
            qos_target_bps: target,
            band: Band {
                center_hz: 2.4e9,
                bandwidth_hz: 20e6,
            },
            position: [0.0; 3],
        }
    }

    #[test]
    fn degradation_threshold() {
        let above: Vec<_> = (0..10).map(|e| sample(e, 5.0)).collect();
        assert_eq!(detect_degradation(&agent(4.0), &above, 10), Some(false));
        let blocked: Vec<_> = (0..10).map(|e| sample(e, 0.0)).collect();
        assert_eq!(detect_degradation(&agent(4.0), &blocked, 10), Some(true));
        assert_eq!(detect_degradation(&agent(4.0), &above[..9], 10), None);
    }

    #[test]
    fn degradation_mixed_window_uses_latest_mean() {
        let values = [9.0, 1.0, 2.0, 3.0, 7.0, 6.0];
        let samples: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(e, &t)| sample(e as u64, t))
            .collect();
        // last four: (2 + 3 + 7 + 6) / 4 = 4.5
        assert_eq!(detect_degradation(&agent(4.5), &samples, 4), Some(false));
        assert_eq!(
            detect_degradation(&agent(4.5 + 1e-9), &samples, 4),
            Some(true)
        );
    }

    #[test]
    fn feedback_covers_all_ues() {
        let ues: Vec<_> = (1..=4).map(UeId).collect();
        let msg = publish_feedback(7, &sample(3, 1.0), Some("j/0+"), &ues).unwrap();
        assert_eq!(msg.ues.len(), 4);
        assert_eq!(msg.epoch, 7);
        assert_eq!(In2Message::decode(&msg.encode()).unwrap(), msg);
        assert!(publish_feedback(7, &sample(3, 1.0), None, &[UeId(5)]).is_err());
    }

    #[test]
    fn agents_follow_scenario() {
        let s = build_scenario(&ScenarioDocument::default(), 1).unwrap();
        let a = agents(&s, &[1, 3], 2e9).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a.iter().filter(|x| x.subscribed).count(), 2);
        assert_eq!(a[2].band, s.frequency_plan[2]);
        assert!(agents(&s, &[9], 2e9).is_err());
    }
}
