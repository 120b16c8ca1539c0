//! In1 (coefficient update) and In2 (environment feedback) line formats.
//!
//! Each message is one JSON object per line carrying a top-level `v`.
//! Capacitance travels in picofarads.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{MetricsSample, UeMetrics};
use crate::em::ElementTuning;
use crate::optimizer::RisId;
use crate::UeId;

pub const WIRE_VERSION: u32 = 1;

const PF: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported version {0}")]
    Version(u64),
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("checksum mismatch")]
    Checksum,
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn digest_hex(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn check_version(line: &str) -> Result<serde_json::Value, WireError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| WireError::Malformed(e.to_string()))?;
    match value.get("v").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(WIRE_VERSION) => Ok(value),
        Some(v) => Err(WireError::Version(v)),
        None => Err(WireError::Malformed("missing `v`".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct In1Message {
    pub v: u32,
    pub ris_id: RisId,
    pub seq: u64,
    pub indices: Vec<usize>,
    pub capacitance_pf: Vec<f64>,
    pub resistance_ohm: Vec<f64>,
    pub checksum: String,
}

#[derive(Serialize)]
struct In1Content<'a> {
    ris_id: &'a RisId,
    seq: u64,
    indices: &'a [usize],
    capacitance_pf: &'a [f64],
    resistance_ohm: &'a [f64],
}

impl In1Message {
    /// Builds a sealed update.
    pub fn new(ris_id: RisId, seq: u64, indices: Vec<usize>, tunings: &[ElementTuning]) -> Self {
        let mut msg = Self {
            v: WIRE_VERSION,
            ris_id,
            seq,
            indices,
            capacitance_pf: tunings.iter().map(|t| t.capacitance / PF).collect(),
            resistance_ohm: tunings.iter().map(|t| t.resistance).collect(),
            checksum: String::new(),
        };
        msg.checksum = msg.expected_checksum();
        msg
    }

    pub fn expected_checksum(&self) -> String {
        let content = In1Content {
            ris_id: &self.ris_id,
            seq: self.seq,
            indices: &self.indices,
            capacitance_pf: &self.capacitance_pf,
            resistance_ohm: &self.resistance_ohm,
        };
        digest_hex(&serde_json::to_vec(&content).expect("plain data serializes"))
    }

    /// Structural checks that need no registry: parallel lists, finite
    /// values, unique indices, tunings inside the box, checksum.
    pub fn validate(&self) -> Result<(), WireError> {
        if self.v != WIRE_VERSION {
            return Err(WireError::Version(u64::from(self.v)));
        }
        let n = self.indices.len();
        if self.capacitance_pf.len() != n || self.resistance_ohm.len() != n {
            return Err(WireError::Invalid(
                "index and tuning lists differ in length".into(),
            ));
        }
        if n == 0 {
            return Err(WireError::Invalid("empty update".into()));
        }
        let mut seen = self.indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(WireError::Invalid("duplicate index".into()));
        }
        if self.checksum != self.expected_checksum() {
            return Err(WireError::Checksum);
        }
        self.tunings().map(|_| ())
    }

    pub fn tunings(&self) -> Result<Vec<ElementTuning>, WireError> {
        self.capacitance_pf
            .iter()
            .zip(&self.resistance_ohm)
            .enumerate()
            .map(|(i, (&c, &r))| {
                ElementTuning::new(c * PF, r)
                    .map_err(|e| WireError::Invalid(format!("tuning {i}: {e}")))
            })
            .collect()
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn decode(line: &str) -> Result<Self, WireError> {
        let value = check_version(line)?;
        serde_json::from_value(value).map_err(|e| WireError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Applied,
    Stale,
    Rejected,
}

/// Reply to an In1 line. `seq` echoes the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct In1Ack {
    pub v: u32,
    pub ris_id: RisId,
    pub seq: u64,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl In1Ack {
    pub fn new(ris_id: RisId, seq: u64, status: AckStatus, reason: Option<String>) -> Self {
        Self {
            v: WIRE_VERSION,
            ris_id,
            seq,
            status,
            reason,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn decode(line: &str) -> Result<Self, WireError> {
        let value = check_version(line)?;
        serde_json::from_value(value).map_err(|e| WireError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeRecord {
    pub ue_id: UeId,
    pub throughput_bps: f64,
    pub sinr_db: f64,
    pub band_center_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct In2Message {
    pub v: u32,
    pub epoch: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_tag: Option<String>,
    pub ues: Vec<UeRecord>,
}

impl In2Message {
    pub fn from_metrics(metrics: &MetricsSample, probe_tag: Option<String>) -> Self {
        Self {
            v: WIRE_VERSION,
            epoch: metrics.epoch,
            probe_tag,
            ues: metrics
                .ues
                .iter()
                .map(|m| UeRecord {
                    ue_id: m.ue_id,
                    throughput_bps: m.throughput_bps,
                    sinr_db: m.sinr_db,
                    band_center_hz: m.band_center_hz,
                })
                .collect(),
        }
    }

    pub fn to_metrics(&self) -> MetricsSample {
        MetricsSample {
            epoch: self.epoch,
            ues: self
                .ues
                .iter()
                .map(|r| UeMetrics {
                    ue_id: r.ue_id,
                    throughput_bps: r.throughput_bps,
                    sinr_db: r.sinr_db,
                    band_center_hz: r.band_center_hz,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if self.v != WIRE_VERSION {
            return Err(WireError::Version(u64::from(self.v)));
        }
        if self.ues.is_empty() {
            return Err(WireError::Invalid("no UE records".into()));
        }
        for r in &self.ues {
            if !(r.throughput_bps.is_finite()
                && r.sinr_db.is_finite()
                && r.band_center_hz.is_finite())
            {
                return Err(WireError::Invalid(format!(
                    "non-finite record for UE {}",
                    r.ue_id
                )));
            }
            if r.throughput_bps < 0.0 || r.band_center_hz <= 0.0 {
                return Err(WireError::Invalid(format!(
                    "out-of-range record for UE {}",
                    r.ue_id
                )));
            }
        }
        let mut ids: Vec<UeId> = self.ues.iter().map(|r| r.ue_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(WireError::Invalid("duplicate UE record".into()));
        }
        Ok(())
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn decode(line: &str) -> Result<Self, WireError> {
        let value = check_version(line)?;
        let msg: Self =
            serde_json::from_value(value).map_err(|e| WireError::Malformed(e.to_string()))?;
        msg.validate()?;
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tuning(c_pf: f64) -> ElementTuning {
        ElementTuning::new(c_pf * PF, 1.0).unwrap()
    }

    #[test]
    fn in1_checksum_seals_content() {
        let msg = In1Message::new(
            RisId::from("ris-a"),
            3,
            vec![0, 1],
            &[tuning(1.0), tuning(2.0)],
        );
        msg.validate().unwrap();
        assert_eq!(msg.checksum.len(), 16);
        let mut tampered = msg.clone();
        tampered.indices[1] = 2;
        assert_eq!(tampered.validate(), Err(WireError::Checksum));
        let mut tampered = msg;
        tampered.capacitance_pf[0] = 1.5;
        assert_eq!(tampered.validate(), Err(WireError::Checksum));
    }

    #[test]
    fn in1_rejects_ragged_and_out_of_box() {
        let mut msg = In1Message::new(RisId::from("r"), 1, vec![0, 1], &[tuning(1.0), tuning(2.0)]);
        msg.resistance_ohm.pop();
        msg.checksum = msg.expected_checksum();
        assert!(matches!(msg.validate(), Err(WireError::Invalid(_))));

        let mut msg = In1Message::new(RisId::from("r"), 1, vec![0], &[tuning(1.0)]);
        msg.capacitance_pf[0] = 9.0;
        msg.checksum = msg.expected_checksum();
        assert!(matches!(msg.validate(), Err(WireError::Invalid(_))));
    }

    #[test]
    fn version_gate() {
        let line = In1Message::new(RisId::from("r"), 1, vec![0], &[tuning(1.0)])
            .encode()
            .replace("\"v\":1", "\"v\":2");
        assert_eq!(In1Message::decode(&line), Err(WireError::Version(2)));
        assert!(matches!(
            In2Message::decode(r#"{"epoch":1,"ues":[]}"#),
            Err(WireError::Malformed(_))
        ));
    }

    #[test]
    fn in2_validation() {
        let ok = r#"{"v":1,"epoch":4,"probe_tag":"x/1+","ues":[{"ue_id":1,"throughput_bps":5.0,"sinr_db":3.0,"band_center_hz":2.4e9}]}"#;
        let msg = In2Message::decode(ok).unwrap();
        assert_eq!(msg.probe_tag.as_deref(), Some("x/1+"));
        assert!(matches!(
            In2Message::decode(r#"{"v":1,"epoch":4,"ues":[]}"#),
            Err(WireError::Invalid(_))
        ));
        let dup = r#"{"v":1,"epoch":4,"ues":[{"ue_id":1,"throughput_bps":5.0,"sinr_db":3.0,"band_center_hz":2.4e9},{"ue_id":1,"throughput_bps":5.0,"sinr_db":3.0,"band_center_hz":2.4e9}]}"#;
        assert!(In2Message::decode(dup).is_err());
        let extra = ok.replace("\"epoch\":4", "\"epoch\":4,\"x\":0");
        assert!(matches!(
            In2Message::decode(&extra),
            Err(WireError::Malformed(_))
        ));
    }

    fn in1_strategy() -> impl Strategy<Value = In1Message> {
        (
            "[a-z0-9-]{1,12}",
            any::<u64>(),
            proptest::collection::vec((0usize..4096, 0.47f64..2.35, 0.0f64..5.0), 1..40),
        )
            .prop_map(|(id, seq, items)| {
                let indices = items.iter().map(|x| x.0).collect();
                let tunings: Vec<_> = items
                    .iter()
                    .map(|x| ElementTuning {
                        capacitance: x.1 * PF,
                        resistance: x.2,
                    })
                    .collect();
                In1Message::new(RisId(id), seq, indices, &tunings)
            })
    }

    fn in2_strategy() -> impl Strategy<Value = In2Message> {
        (
            any::<u64>(),
            proptest::option::of("[a-z0-9/+-]{1,16}"),
            proptest::collection::vec((0.0f64..1e10, -50.0f64..80.0, 1e9f64..6e9), 1..8),
        )
            .prop_map(|(epoch, probe_tag, recs)| In2Message {
                v: WIRE_VERSION,
                epoch,
                probe_tag,
                ues: recs
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| UeRecord {
                        ue_id: UeId(i as u32 + 1),
                        throughput_bps: r.0,
                        sinr_db: r.1,
                        band_center_hz: r.2,
                    })
                    .collect(),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn in1_round_trip(msg in in1_strategy()) {
            let back = In1Message::decode(&msg.encode()).unwrap();
            prop_assert_eq!(&back, &msg);
            prop_assert_eq!(back.expected_checksum(), msg.checksum);
        }

        #[test]
        fn in2_round_trip(msg in in2_strategy()) {
            prop_assert_eq!(In2Message::decode(&msg.encode()).unwrap(), msg.clone());
            let metrics = msg.to_metrics();
            prop_assert_eq!(In2Message::from_metrics(&metrics, msg.probe_tag.clone()), msg);
        }
    }
}
