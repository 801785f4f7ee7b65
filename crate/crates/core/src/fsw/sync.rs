//! Observation state machine mirrored between an active and a passive spacecraft.
//!
//! The active spacecraft takes begin/end-observation commands from the
//! ground and forwards each transition over the crosslink. With the naive
//! protocol every transition is sent once and the passive side applies what
//! it receives; a dropped message leaves the two out of step and the next
//! event is an invalid transition. The robust protocol numbers transitions,
//! retransmits until acknowledged, and has the passive side apply them
//! strictly in sequence, ignoring duplicates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fault::FaultReason;
use crate::host::Output;
use crate::time::SimTime;

use super::messages::{Message, SyncKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Science,
    Observing,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Science => "science",
            Mode::Observing => "observing",
        }
    }

    /// The mode `kind` leads to, or `None` when the pair is invalid.
    pub fn after(self, kind: SyncKind) -> Option<Mode> {
        match (self, kind) {
            (Mode::Science, SyncKind::Begin) => Some(Mode::Observing),
            (Mode::Observing, SyncKind::End) => Some(Mode::Science),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Active,
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Naive,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// A ground command on this spacecraft.
    Local,
    /// A sync message from the peer.
    Crosslink { seq: u64 },
}

fn kind_name(kind: SyncKind) -> &'static str {
    match kind {
        SyncKind::Begin => "begin_observation",
        SyncKind::End => "end_observation",
    }
}

#[derive(Debug, Clone)]
pub struct ObservationStateMachine {
    pub mode: Mode,
    pub role: Role,
    pub protocol: Protocol,
    pub peer: String,
    pub retransmit_interval: SimTime,
    /// Last sequence number sent (active) or applied (passive).
    pub last_event_seq: u64,
    /// Robust active: sent but not yet acknowledged, with last send time.
    unacked: BTreeMap<u64, (SyncKind, SimTime)>,
    /// Robust passive: received ahead of sequence.
    holdback: BTreeMap<u64, SyncKind>,
    tick_at: Option<SimTime>,
    pub retransmissions: u64,
    pub duplicates: u64,
}

impl ObservationStateMachine {
    pub fn new(role: Role, protocol: Protocol, peer: &str, retransmit_interval: SimTime) -> Self {
        ObservationStateMachine {
            mode: Mode::Science,
            role,
            protocol,
            peer: peer.to_string(),
            retransmit_interval,
            last_event_seq: 0,
            unacked: BTreeMap::new(),
            holdback: BTreeMap::new(),
            tick_at: None,
            retransmissions: 0,
            duplicates: 0,
        }
    }

    pub fn unacked(&self) -> usize {
        self.unacked.len()
    }

    fn apply(&mut self, kind: SyncKind, out: &mut Vec<Output>) -> Result<(), FaultReason> {
        let next = self.mode.after(kind).ok_or_else(|| FaultReason::InvalidTransition {
            event: kind_name(kind).to_string(),
            mode: self.mode.as_str().to_string(),
        })?;
        self.mode = next;
        out.push(Output::MissionMode(next.as_str().to_string()));
        Ok(())
    }

    fn send(&self, seq: u64, kind: SyncKind, out: &mut Vec<Output>) {
        out.push(Output::CrosslinkSend {
            to: self.peer.clone(),
            bytes: Message::Sync { seq, kind }.encode(),
        });
    }

    fn arm_tick(&mut self, at: SimTime, out: &mut Vec<Output>) {
        if self.tick_at.is_none_or(|t| at < t) {
            self.tick_at = Some(at);
            out.push(Output::TickRequest(at));
        }
    }

    /// Handles one begin/end event from the ground or from the peer.
    pub fn sync_handle_event(
        &mut self,
        kind: SyncKind,
        source: Source,
        now: SimTime,
    ) -> Result<Vec<Output>, FaultReason> {
        let mut out = Vec::new();
        match (self.protocol, self.role, source) {
            (Protocol::Naive, Role::Active, Source::Local) => {
                self.apply(kind, &mut out)?;
                self.last_event_seq += 1;
                self.send(self.last_event_seq, kind, &mut out);
            }
            (Protocol::Naive, Role::Passive, Source::Crosslink { seq }) => {
                self.apply(kind, &mut out)?;
                self.last_event_seq = seq;
            }
            (Protocol::Robust, Role::Active, Source::Local) => {
                if self.mode.after(kind).is_none() {
                    out.push(Output::Telemetry(serde_json::json!({
                        "rejected_command": kind_name(kind),
                        "mode": self.mode.as_str(),
                    })));
                    return Ok(out);
                }
                self.apply(kind, &mut out)?;
                self.last_event_seq += 1;
                self.unacked.insert(self.last_event_seq, (kind, now));
                self.send(self.last_event_seq, kind, &mut out);
                self.arm_tick(now + self.retransmit_interval, &mut out);
            }
            (Protocol::Robust, Role::Passive, Source::Crosslink { seq }) => {
                out.push(Output::CrosslinkSend {
                    to: self.peer.clone(),
                    bytes: Message::Ack { seq }.encode(),
                });
                if seq <= self.last_event_seq || self.holdback.contains_key(&seq) {
                    self.duplicates += 1;
                    return Ok(out);
                }
                self.holdback.insert(seq, kind);
                while let Some(kind) = self.holdback.remove(&(self.last_event_seq + 1)) {
                    self.apply(kind, &mut out)?;
                    self.last_event_seq += 1;
                }
            }
            // Commands to the passive spacecraft and sync messages to the
            // active one have no meaning in this protocol.
            _ => out.push(Output::Telemetry(serde_json::json!({"ignored_event": kind_name(kind)}))),
        }
        Ok(out)
    }

    pub fn on_ack(&mut self, seq: u64) {
        self.unacked.remove(&seq);
    }

    /// Retransmits everything overdue and re-arms the tick while anything is unacknowledged.
    pub fn on_tick(&mut self, now: SimTime) -> Vec<Output> {
        let mut out = Vec::new();
        self.tick_at = None;
        if self.protocol != Protocol::Robust {
            return out;
        }
        let due: Vec<(u64, SyncKind)> = self
            .unacked
            .iter()
            .filter(|(_, (_, sent))| *sent + self.retransmit_interval <= now)
            .map(|(seq, (kind, _))| (*seq, *kind))
            .collect();
        for (seq, kind) in due {
            self.send(seq, kind, &mut out);
            self.unacked.insert(seq, (kind, now));
            self.retransmissions += 1;
        }
        if let Some(next) = self
            .unacked
            .values()
            .map(|(_, sent)| *sent + self.retransmit_interval)
            .min()
        {
            self.arm_tick(next, &mut out);
        }
        out
    }
}
