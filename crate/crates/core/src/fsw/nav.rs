//! Queue of navigation solutions received from the peer spacecraft.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::FaultReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavPolicy {
    /// Appends, trusting the link to preserve order. Faults when it does not.
    AssumeSorted,
    /// Inserts by epoch.
    InsertSorted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavEntry {
    /// GPS second of the solution.
    pub epoch: i64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Heap block holding this entry in the owning process, 0 if none.
    pub addr: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ingest {
    /// Accepted; holds entries pushed out by the capacity bound.
    Stored { evicted: Vec<NavEntry> },
    /// An entry with this epoch is already queued.
    Duplicate,
}

#[derive(Debug, Clone)]
pub struct NavQueue {
    entries: Vec<NavEntry>,
    policy: NavPolicy,
    capacity: usize,
}

impl NavQueue {
    pub fn new(policy: NavPolicy, capacity: usize) -> Self {
        NavQueue {
            entries: Vec::new(),
            policy,
            capacity: capacity.max(1),
        }
    }

    pub fn policy(&self) -> NavPolicy {
        self.policy
    }

    pub fn entries(&self) -> &[NavEntry] {
        &self.entries
    }

    pub fn epochs(&self) -> Vec<i64> {
        self.entries.iter().map(|e| e.epoch).collect()
    }

    pub fn nav_ingest(&mut self, entry: NavEntry) -> Result<Ingest, FaultReason> {
        match self.policy {
            NavPolicy::AssumeSorted => match self.entries.last() {
                Some(last) if entry.epoch < last.epoch => {
                    return Err(FaultReason::OutOfOrder {
                        epoch: entry.epoch,
                        last: last.epoch,
                    })
                }
                Some(last) if entry.epoch == last.epoch => return Ok(Ingest::Duplicate),
                _ => self.entries.push(entry),
            },
            NavPolicy::InsertSorted => match self.entries.binary_search_by_key(&entry.epoch, |e| e.epoch) {
                Ok(_) => return Ok(Ingest::Duplicate),
                Err(i) => self.entries.insert(i, entry),
            },
        }
        let excess = self.entries.len().saturating_sub(self.capacity);
        let evicted = self.entries.drain(..excess).collect();
        Ok(Ingest::Stored { evicted })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NavUpdateError {
    #[error("no epoch is shared by the local and remote solutions")]
    NoCommonEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeNav {
    pub epoch: i64,
    /// Remote minus local position, m.
    pub estimate: [f64; 3],
}

/// Differences the newest remote solution that has a local solution at the same epoch.
pub fn relative_nav_update(local: &BTreeMap<i64, [f64; 3]>, queue: &NavQueue) -> Result<RelativeNav, NavUpdateError> {
    queue
        .entries()
        .iter()
        .rev()
        .find_map(|remote| {
            local.get(&remote.epoch).map(|l| RelativeNav {
                epoch: remote.epoch,
                estimate: [
                    remote.position[0] - l[0],
                    remote.position[1] - l[1],
                    remote.position[2] - l[2],
                ],
            })
        })
        .ok_or(NavUpdateError::NoCommonEpoch)
}
