//! Pool allocation: turning a subscriber set into leases over free elements.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::em::{ElementTuning, RisPanel};
use crate::UeId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RisId(pub String);

impl std::fmt::Display for RisId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RisId {
    fn from(s: &str) -> Self {
        RisId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LeaseId(pub u64);

impl std::fmt::Display for LeaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationPolicy {
    /// Equal contiguous blocks, one per subscriber.
    Partitioned,
    /// Every free element in one block serving all subscribers.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaseState {
    Active,
    Released,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationLease {
    pub lease_id: LeaseId,
    pub ris_id: RisId,
    /// Sorted, unique element indices on `ris_id`.
    pub element_indices: Vec<usize>,
    pub beneficiary_ues: BTreeSet<UeId>,
    pub policy: AllocationPolicy,
    pub state: LeaseState,
}

impl AllocationLease {
    pub fn is_active(&self) -> bool {
        self.state == LeaseState::Active
    }

    pub fn contains_all(&self, indices: &[usize]) -> bool {
        indices
            .iter()
            .all(|i| self.element_indices.binary_search(i).is_ok())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("allocation request names no UE")]
    EmptyRequest,
    #[error("allocation unavailable: {free} free elements for {requested} subscribers")]
    Unavailable { free: usize, requested: usize },
    #[error("unknown surface `{0}`")]
    UnknownRis(RisId),
    #[error("surface `{0}` already registered")]
    DuplicateRis(RisId),
    #[error("unknown lease {0}")]
    UnknownLease(LeaseId),
    #[error("element {index} on `{ris_id}` is not free")]
    ElementBusy { ris_id: RisId, index: usize },
    #[error("element {index} out of range on `{ris_id}`")]
    IndexOutOfRange { ris_id: RisId, index: usize },
}

/// Free elements per surface, in surface-id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoolView {
    pub surfaces: Vec<(RisId, Vec<usize>)>,
}

impl PoolView {
    pub fn total_free(&self) -> usize {
        self.surfaces.iter().map(|(_, f)| f.len()).sum()
    }
}

/// Hands out consecutive lease ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LeaseIds {
    next: u64,
}

impl LeaseIds {
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> LeaseId {
        let id = LeaseId(self.next);
        self.next += 1;
        id
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

/// Splits free elements among `request`.
///
/// The pool is read as one sequence ordered by surface id, then element
/// index. PARTITIONED cuts it into contiguous blocks whose sizes differ by at
/// most one, the larger blocks going to the lower UE ids; a block that
/// straddles two surfaces becomes one lease per surface. JOINT produces one
/// lease per surface holding all its free elements with every requesting UE
/// as beneficiary.
pub fn allocate(
    pool: &PoolView,
    request: &BTreeSet<UeId>,
    policy: AllocationPolicy,
    ids: &mut LeaseIds,
) -> Result<Vec<AllocationLease>, AllocationError> {
    if request.is_empty() {
        return Err(AllocationError::EmptyRequest);
    }
    let free = pool.total_free();
    let unavailable = AllocationError::Unavailable {
        free,
        requested: request.len(),
    };
    let flat: Vec<(&RisId, usize)> = pool
        .surfaces
        .iter()
        .flat_map(|(id, idx)| idx.iter().map(move |&i| (id, i)))
        .collect();

    match policy {
        AllocationPolicy::Joint => {
            if free == 0 {
                return Err(unavailable);
            }
            Ok(pool
                .surfaces
                .iter()
                .filter(|(_, idx)| !idx.is_empty())
                .map(|(id, idx)| AllocationLease {
                    lease_id: ids.next_id(),
                    ris_id: id.clone(),
                    element_indices: idx.clone(),
                    beneficiary_ues: request.clone(),
                    policy,
                    state: LeaseState::Active,
                })
                .collect())
        }
        AllocationPolicy::Partitioned => {
            let n = request.len();
            if free < n {
                return Err(unavailable);
            }
            let (base, extra) = (free / n, free % n);
            let mut leases = Vec::new();
            let mut start = 0;
            for (rank, ue) in request.iter().enumerate() {
                let size = base + usize::from(rank < extra);
                let block = &flat[start..start + size];
                start += size;
                let mut i = 0;
                while i < block.len() {
                    let ris = block[i].0;
                    let mut indices = Vec::new();
                    while i < block.len() && block[i].0 == ris {
                        indices.push(block[i].1);
                        i += 1;
                    }
                    leases.push(AllocationLease {
                        lease_id: ids.next_id(),
                        ris_id: ris.clone(),
                        element_indices: indices,
                        beneficiary_ues: BTreeSet::from([*ue]),
                        policy,
                        state: LeaseState::Active,
                    });
                }
            }
            Ok(leases)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Surface {
    panel: RisPanel,
    owner: Vec<Option<LeaseId>>,
    reset: ElementTuning,
}

/// Live state of every pooled surface plus the lease table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RisPool {
    surfaces: BTreeMap<RisId, Surface>,
    leases: BTreeMap<LeaseId, AllocationLease>,
    ids: LeaseIds,
}

impl RisPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a surface with every element free and at the reset tuning.
    pub fn add_surface(
        &mut self,
        id: RisId,
        mut panel: RisPanel,
        reset: ElementTuning,
    ) -> Result<(), AllocationError> {
        if self.surfaces.contains_key(&id) {
            return Err(AllocationError::DuplicateRis(id));
        }
        panel.tunings.iter_mut().for_each(|t| *t = reset);
        let owner = vec![None; panel.len()];
        self.surfaces.insert(
            id,
            Surface {
                panel,
                owner,
                reset,
            },
        );
        Ok(())
    }

    pub fn contains(&self, id: &RisId) -> bool {
        self.surfaces.contains_key(id)
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface_ids(&self) -> impl Iterator<Item = &RisId> {
        self.surfaces.keys()
    }

    pub fn panel(&self, id: &RisId) -> Option<&RisPanel> {
        self.surfaces.get(id).map(|s| &s.panel)
    }

    pub fn reset_tuning(&self, id: &RisId) -> Option<ElementTuning> {
        self.surfaces.get(id).map(|s| s.reset)
    }

    pub fn owner_of(&self, id: &RisId, index: usize) -> Option<LeaseId> {
        self.surfaces.get(id)?.owner.get(index).copied().flatten()
    }

    /// (leased, free) element counts of one surface.
    pub fn counts(&self, id: &RisId) -> Option<(usize, usize)> {
        let s = self.surfaces.get(id)?;
        let leased = s.owner.iter().filter(|o| o.is_some()).count();
        Some((leased, s.owner.len() - leased))
    }

    pub fn free_view(&self) -> PoolView {
        PoolView {
            surfaces: self
                .surfaces
                .iter()
                .map(|(id, s)| {
                    let free = (0..s.owner.len())
                        .filter(|&i| s.owner[i].is_none())
                        .collect();
                    (id.clone(), free)
                })
                .collect(),
        }
    }

    /// Every element regardless of ownership.
    pub fn full_view(&self) -> PoolView {
        PoolView {
            surfaces: self
                .surfaces
                .iter()
                .map(|(id, s)| (id.clone(), (0..s.owner.len()).collect()))
                .collect(),
        }
    }

    pub fn lease_ids(&mut self) -> &mut LeaseIds {
        &mut self.ids
    }

    pub fn lease(&self, id: LeaseId) -> Option<&AllocationLease> {
        self.leases.get(&id)
    }

    pub fn leases(&self) -> impl Iterator<Item = &AllocationLease> {
        self.leases.values()
    }

    pub fn active_leases(&self) -> impl Iterator<Item = &AllocationLease> {
        self.leases.values().filter(|l| l.is_active())
    }

    /// Records freshly allocated leases, claiming their elements. Either all
    /// leases are granted or none.
    pub fn grant(&mut self, leases: Vec<AllocationLease>) -> Result<(), AllocationError> {
        for lease in &leases {
            let s = self
                .surfaces
                .get(&lease.ris_id)
                .ok_or_else(|| AllocationError::UnknownRis(lease.ris_id.clone()))?;
            for &i in &lease.element_indices {
                match s.owner.get(i) {
                    None => {
                        return Err(AllocationError::IndexOutOfRange {
                            ris_id: lease.ris_id.clone(),
                            index: i,
                        })
                    }
                    Some(Some(_)) => {
                        return Err(AllocationError::ElementBusy {
                            ris_id: lease.ris_id.clone(),
                            index: i,
                        })
                    }
                    Some(None) => {}
                }
            }
        }
        for lease in leases {
            let s = self.surfaces.get_mut(&lease.ris_id).expect("checked above");
            for &i in &lease.element_indices {
                s.owner[i] = Some(lease.lease_id);
            }
            self.ids = LeaseIds::starting_at(self.ids.peek().max(lease.lease_id.0 + 1));
            self.leases.insert(lease.lease_id, lease);
        }
        Ok(())
    }

    pub fn add_beneficiary(&mut self, lease: LeaseId, ue: UeId) -> Result<(), AllocationError> {
        let l = self
            .leases
            .get_mut(&lease)
            .ok_or(AllocationError::UnknownLease(lease))?;
        l.beneficiary_ues.insert(ue);
        Ok(())
    }

    /// Drops `ue` from the lease's beneficiaries; returns the remaining count.
    pub fn remove_beneficiary(
        &mut self,
        lease: LeaseId,
        ue: UeId,
    ) -> Result<usize, AllocationError> {
        let l = self
            .leases
            .get_mut(&lease)
            .ok_or(AllocationError::UnknownLease(lease))?;
        l.beneficiary_ues.remove(&ue);
        Ok(l.beneficiary_ues.len())
    }

    /// Releases a lease: its elements go back to the pool at the reset
    /// tuning. Returns whether anything changed; releasing twice is a no-op.
    pub fn reset_lease(&mut self, lease: LeaseId) -> Result<bool, AllocationError> {
        let l = self
            .leases
            .get_mut(&lease)
            .ok_or(AllocationError::UnknownLease(lease))?;
        if l.state == LeaseState::Released {
            return Ok(false);
        }
        l.state = LeaseState::Released;
        let s = self
            .surfaces
            .get_mut(&l.ris_id)
            .expect("lease refers to a registered surface");
        for &i in &l.element_indices {
            s.owner[i] = None;
            s.panel.tunings[i] = s.reset;
        }
        Ok(true)
    }

    /// Overwrites element tunings. Authorization is the caller's concern.
    pub fn apply_tunings(
        &mut self,
        id: &RisId,
        indices: &[usize],
        tunings: &[ElementTuning],
    ) -> Result<(), AllocationError> {
        let s = self
            .surfaces
            .get_mut(id)
            .ok_or_else(|| AllocationError::UnknownRis(id.clone()))?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= s.panel.len()) {
            return Err(AllocationError::IndexOutOfRange {
                ris_id: id.clone(),
                index: bad,
            });
        }
        for (&i, t) in indices.iter().zip(tunings) {
            s.panel.tunings[i] = *t;
        }
        Ok(())
    }

    /// Checks pool invariants: ownership table and lease table agree, no
    /// element is held by two active leases, and active leases have
    /// beneficiaries.
    pub fn audit(&self) -> Result<(), String> {
        let mut claimed: BTreeMap<(&RisId, usize), LeaseId> = BTreeMap::new();
        for lease in self.active_leases() {
            if lease.beneficiary_ues.is_empty() {
                return Err(format!("{} active without beneficiaries", lease.lease_id));
            }
            for &i in &lease.element_indices {
                if let Some(other) = claimed.insert((&lease.ris_id, i), lease.lease_id) {
                    return Err(format!(
                        "element {i} on {} held by {other} and {}",
                        lease.ris_id, lease.lease_id
                    ));
                }
            }
        }
        for (id, s) in &self.surfaces {
            for (i, owner) in s.owner.iter().enumerate() {
                if claimed.get(&(id, i)).copied() != *owner {
                    return Err(format!("ownership of element {i} on {id} out of sync"));
                }
            }
        }
        Ok(())
    }
}
