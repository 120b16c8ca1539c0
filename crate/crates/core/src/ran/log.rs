//! Episode event log and the workflow pattern check.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::channel::MetricsSample;
use crate::config::Regime;
use crate::control::wire::digest_hex;
use crate::optimizer::LeaseId;
use crate::UeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ServiceRequest,
    Allocate,
    Decline,
    CoefficientUpdate,
    Feedback,
    Terminate,
    Release,
}

impl EventKind {
    pub fn letter(self) -> char {
        match self {
            EventKind::ServiceRequest => 'R',
            EventKind::Allocate => 'A',
            EventKind::Decline => 'D',
            EventKind::CoefficientUpdate => 'U',
            EventKind::Feedback => 'F',
            EventKind::Terminate => 'T',
            EventKind::Release => 'X',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Logical time; one tick per event.
    pub t: u64,
    pub actor: String,
    pub kind: EventKind,
    /// UEs the event concerns. Feedback concerns every reported UE;
    /// updates and releases concern the lease's beneficiaries.
    pub ues: Vec<UeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lease_id: Option<LeaseId>,
    pub digest: String,
}

/// One measured epoch; probe epochs appear once per probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_tag: Option<String>,
    pub sample: MetricsSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub regime: Regime,
    pub seed: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub events: Vec<Event>,
    pub series: Vec<SeriesPoint>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line<'a> {
    Episode(&'a EpisodeHeader),
    Event(&'a Event),
    Sample(&'a SeriesPoint),
}

impl EpisodeLog {
    pub fn new(header: EpisodeHeader) -> Self {
        Self {
            header,
            events: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        actor: impl Into<String>,
        kind: EventKind,
        ues: Vec<UeId>,
        lease_id: Option<LeaseId>,
        payload: &str,
    ) {
        let t = self.events.last().map_or(0, |e| e.t + 1);
        self.events.push(Event {
            t,
            actor: actor.into(),
            kind,
            ues,
            lease_id,
            digest: digest_hex(payload.as_bytes()),
        });
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut line = |l: Line| {
            out.push_str(&serde_json::to_string(&l).expect("log records serialize"));
            out.push('\n');
        };
        line(Line::Episode(&self.header));
        self.events.iter().for_each(|e| line(Line::Event(e)));
        self.series.iter().for_each(|s| line(Line::Sample(s)));
        out
    }

    pub fn digest(&self) -> String {
        digest_hex(self.to_jsonl().as_bytes())
    }

    /// Per-epoch series as CSV, one row per UE.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("epoch,probe_tag,ue_id,throughput_bps,sinr_db,band_center_hz\n");
        for p in &self.series {
            for u in &p.sample.ues {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    p.sample.epoch,
                    p.probe_tag.as_deref().unwrap_or(""),
                    u.ue_id,
                    u.throughput_bps,
                    u.sinr_db,
                    u.band_center_hz
                ));
            }
        }
        out
    }

    /// The event letters one UE sees, in order.
    pub fn projection(&self, ue: UeId) -> String {
        self.events
            .iter()
            .filter(|e| e.ues.contains(&ue))
            .map(|e| e.kind.letter())
            .collect()
    }
}

fn workflow() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^F*(?:R(?:A[UF]*TF*X+|D)F*)?$").expect("valid pattern"))
}

/// Checks every UE's projection against request, allocate, updates and
/// feedback, terminate, release (or request, decline), and that logical
/// time never runs backwards.
pub fn check_workflow(log: &EpisodeLog, ues: &[UeId]) -> Result<(), String> {
    if let Some(w) = log.events.windows(2).find(|w| w[1].t < w[0].t) {
        return Err(format!("time runs backwards at t = {}", w[1].t));
    }
    let mut bad = BTreeMap::new();
    for &ue in ues {
        let p = log.projection(ue);
        if !workflow().is_match(&p) {
            bad.insert(ue, p);
        }
    }
    match bad.into_iter().next() {
        None => Ok(()),
        Some((ue, p)) => {
            let shown: String = p.chars().take(60).collect();
            Err(format!(
                "UE {ue} sequence `{shown}` does not follow the workflow"
            ))
        }
    }
}
