//! Surface registry: descriptors, live element state, leases, and the
//! append-only journal that rebuilds them.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::em::{CircuitConstants, ElementTuning, RisPanel, DEFAULT_RESISTANCE};
use crate::optimizer::{AllocationLease, LeaseId, RisId, RisPool};
use crate::UeId;

use super::ControlError;

fn default_resistance() -> f64 {
    DEFAULT_RESISTANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisDescriptor {
    pub ris_id: RisId,
    pub location: [f64; 3],
    pub orientation: [f64; 3],
    /// (rows, cols).
    pub array_size: (usize, usize),
    /// 0 = continuous.
    #[serde(default)]
    pub phase_quantization_level: u32,
    #[serde(default)]
    pub owner_tag: String,
    #[serde(default)]
    pub constants: CircuitConstants,
    #[serde(default = "default_resistance")]
    pub resistance_ohm: f64,
}

impl RisDescriptor {
    pub fn elements(&self) -> usize {
        self.array_size.0 * self.array_size.1
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |field: &str, reason: String| ControlError::Validation {
            field: field.to_string(),
            reason,
        };
        if self.ris_id.0.trim().is_empty() {
            return Err(bad("ris_id", "empty identifier".into()));
        }
        if self.location.iter().any(|x| !x.is_finite()) {
            return Err(bad("location", "non-finite coordinate".into()));
        }
        let norm = self.orientation.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= 1e-9) {
            return Err(bad("orientation", format!("norm {norm} is not 1")));
        }
        if self.array_size.0 == 0 || self.array_size.1 == 0 {
            return Err(bad("array_size", "rows and cols must be positive".into()));
        }
        if let Err(e) = self.constants.validate() {
            let field = match e {
                crate::em::EmError::InvalidConstant { field, .. } => format!("constants.{field}"),
                _ => "constants".to_string(),
            };
            return Err(bad(&field, e.to_string()));
        }
        if !(self.resistance_ohm >= 0.0 && self.resistance_ohm.is_finite()) {
            return Err(bad("resistance_ohm", "must be non-negative".into()));
        }
        Ok(())
    }

    pub fn reset_tuning(&self) -> ElementTuning {
        ElementTuning::reset(self.resistance_ohm)
    }
}

/// One registry mutation. Replaying entries in order rebuilds the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JournalEntry {
    Register {
        descriptor: RisDescriptor,
    },
    Grant {
        leases: Vec<AllocationLease>,
    },
    Join {
        lease_id: LeaseId,
        ue_id: UeId,
    },
    Leave {
        lease_id: LeaseId,
        ue_id: UeId,
    },
    Release {
        lease_id: LeaseId,
    },
    Apply {
        ris_id: RisId,
        lease_id: LeaseId,
        seq: u64,
        indices: Vec<usize>,
        tunings: Vec<ElementTuning>,
    },
}

/// Live view of one surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisState {
    pub descriptor: RisDescriptor,
    pub tunings: Vec<ElementTuning>,
    pub owners: Vec<Option<LeaseId>>,
}

impl RisState {
    pub fn leased(&self) -> usize {
        self.owners.iter().filter(|o| o.is_some()).count()
    }

    pub fn free(&self) -> usize {
        self.owners.len() - self.leased()
    }

    pub fn panel(&self) -> RisPanel {
        RisPanel {
            rows: self.descriptor.array_size.0,
            cols: self.descriptor.array_size.1,
            constants: self.descriptor.constants,
            tunings: self.tunings.clone(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Registry {
    descriptors: BTreeMap<RisId, RisDescriptor>,
    pool: RisPool,
    last_seq: BTreeMap<LeaseId, u64>,
    journal: Option<(PathBuf, File)>,
}

impl PartialEq for Registry {
    fn eq(&self, other: &Self) -> bool {
        self.descriptors == other.descriptors
            && self.pool == other.pool
            && self.last_seq == other.last_seq
    }
}

impl Clone for Registry {
    /// Clones the state; the clone does not journal.
    fn clone(&self) -> Self {
        Self {
            descriptors: self.descriptors.clone(),
            pool: self.pool.clone(),
            last_seq: self.last_seq.clone(),
            journal: None,
        }
    }
}

fn journal_err(path: &Path, e: impl std::fmt::Display) -> ControlError {
    ControlError::Journal(format!("{}: {e}", path.display()))
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays the journal at `path` (if present) and appends to it from
    /// then on.
    pub fn open(path: &Path) -> Result<Self, ControlError> {
        let mut registry = Self::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| journal_err(path, e))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| journal_err(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry = serde_json::from_str(&line)
                    .map_err(|e| journal_err(path, format!("line {}: {e}", n + 1)))?;
                registry
                    .apply(&entry)
                    .map_err(|e| journal_err(path, format!("line {}: {e}", n + 1)))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| journal_err(path, e))?;
        registry.journal = Some((path.to_path_buf(), file));
        Ok(registry)
    }

    fn apply(&mut self, entry: &JournalEntry) -> Result<(), ControlError> {
        match entry {
            JournalEntry::Register { descriptor } => {
                descriptor.validate()?;
                if self.descriptors.contains_key(&descriptor.ris_id) {
                    return Err(ControlError::Conflict(format!(
                        "surface `{}` already registered",
                        descriptor.ris_id
                    )));
                }
                let (rows, cols) = descriptor.array_size;
                let panel =
                    RisPanel::uniform(rows, cols, descriptor.constants, descriptor.resistance_ohm);
                self.pool.add_surface(
                    descriptor.ris_id.clone(),
                    panel,
                    descriptor.reset_tuning(),
                )?;
                self.descriptors
                    .insert(descriptor.ris_id.clone(), descriptor.clone());
            }
            JournalEntry::Grant { leases } => self.pool.grant(leases.clone())?,
            JournalEntry::Join { lease_id, ue_id } => {
                self.pool.add_beneficiary(*lease_id, *ue_id)?
            }
            JournalEntry::Leave { lease_id, ue_id } => {
                self.pool.remove_beneficiary(*lease_id, *ue_id)?;
            }
            JournalEntry::Release { lease_id } => {
                self.pool.reset_lease(*lease_id)?;
            }
            JournalEntry::Apply {
                ris_id,
                lease_id,
                seq,
                indices,
                tunings,
            } => {
                self.pool.apply_tunings(ris_id, indices, tunings)?;
                self.last_seq.insert(*lease_id, *seq);
            }
        }
        Ok(())
    }

    /// Applies and journals one mutation.
    pub(crate) fn commit(&mut self, entry: JournalEntry) -> Result<(), ControlError> {
        self.apply(&entry)?;
        if let Some((path, file)) = &mut self.journal {
            let line = serde_json::to_string(&entry).expect("journal entries serialize");
            writeln!(file, "{line}").map_err(|e| journal_err(path, e))?;
            file.flush().map_err(|e| journal_err(path, e))?;
        }
        Ok(())
    }

    pub fn pool(&self) -> &RisPool {
        &self.pool
    }

    pub(crate) fn pool_mut(&mut self) -> &mut RisPool {
        &mut self.pool
    }

    pub fn descriptor(&self, id: &RisId) -> Option<&RisDescriptor> {
        self.descriptors.get(id)
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn ris_ids(&self) -> Vec<RisId> {
        self.descriptors.keys().cloned().collect()
    }

    pub fn last_seq(&self, lease: LeaseId) -> Option<u64> {
        self.last_seq.get(&lease).copied()
    }

    pub fn state(&self, id: &RisId) -> Option<RisState> {
        let descriptor = self.descriptors.get(id)?.clone();
        let panel = self.pool.panel(id)?;
        let owners = (0..panel.len())
            .map(|i| self.pool.owner_of(id, i))
            .collect();
        Some(RisState {
            descriptor,
            tunings: panel.tunings.clone(),
            owners,
        })
    }

    /// Pool invariants plus: every free element sits at its reset tuning
    /// when `require_reset_when_free` is set.
    pub fn audit(&self, require_reset_when_free: bool) -> Result<(), String> {
        self.pool.audit()?;
        for (id, d) in &self.descriptors {
            let (leased, free) = self.pool.counts(id).ok_or("descriptor without surface")?;
            if leased + free != d.elements() {
                return Err(format!(
                    "{id}: leased {leased} + free {free} != {}",
                    d.elements()
                ));
            }
            if require_reset_when_free {
                let panel = self.pool.panel(id).expect("registered");
                let reset = d.reset_tuning();
                for (i, t) in panel.tunings.iter().enumerate() {
                    if self.pool.owner_of(id, i).is_none() && *t != reset {
                        return Err(format!("{id}: free element {i} not at reset tuning"));
                    }
                }
            }
        }
        Ok(())
    }
}
