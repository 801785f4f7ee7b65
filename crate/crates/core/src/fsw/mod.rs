//! Demonstration flight software.
//!
//! [`DemoSoftware`] is the smallest program that exhibits three classic
//! distributed flight-software defects, each switchable off through
//! [`DemoConfig`]: a mirrored state machine that desynchronizes over a lossy
//! crosslink, a navigation queue that assumes in-order arrival, and a dense
//! matrix that exhausts the process heap.

pub mod messages;
pub mod nav;
pub mod sync;
pub mod workload;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dynamics::EARTH_MU;
use crate::fault::FaultReason;
use crate::gnss::GnssEpoch;
use crate::host::{FlightSoftware, Input, Output, ProcessContext, ProcessDef};
use crate::time::SimTime;

use messages::{Message, SyncKind};
use nav::{Ingest, NavEntry, NavPolicy, NavQueue};
use sync::{ObservationStateMachine, Protocol, Role, Source};
use workload::MatrixWorkload;

pub use nav::{relative_nav_update, NavUpdateError, RelativeNav};
pub use sync::Mode;

/// Bytes of process state kept on the heap for the lifetime of the process.
const STATE_BLOCK: u64 = 512;
/// Heap bytes per queued remote navigation entry.
const NAV_ENTRY_BYTES: u64 = 64;
/// Local solutions kept for matching against remote epochs.
const LOCAL_HISTORY: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub role: Role,
    /// Process on the other end of the crosslink.
    pub peer: Option<String>,
    pub sync: Protocol,
    pub retransmit_interval_s: f64,
    pub nav_policy: NavPolicy,
    /// Send own PVT to the peer every this many GPS seconds; 0 disables.
    pub nav_share_interval_s: i64,
    pub nav_capacity: usize,
    /// Run on the `plan` ground command.
    pub workload: Option<MatrixWorkload>,
    /// Orbit radius the `transfer` ground command raises the orbit to, m.
    pub transfer_target_radius_m: Option<f64>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            role: Role::Active,
            peer: None,
            sync: Protocol::Robust,
            retransmit_interval_s: 5.0,
            nav_policy: NavPolicy::InsertSorted,
            nav_share_interval_s: 10,
            nav_capacity: 120,
            workload: None,
            transfer_target_radius_m: None,
        }
    }
}

pub struct DemoSoftware {
    config: DemoConfig,
    machine: Option<ObservationStateMachine>,
    queue: NavQueue,
    local: BTreeMap<i64, [f64; 3]>,
    latest_pvt: Option<crate::gnss::Pvt>,
}

impl DemoSoftware {
    pub fn new(config: DemoConfig, ctx: &mut ProcessContext<'_>) -> Result<Self, FaultReason> {
        ctx.alloc(STATE_BLOCK)?;
        let machine = config.peer.as_deref().map(|peer| {
            ObservationStateMachine::new(
                config.role,
                config.sync,
                peer,
                SimTime::from_secs_f64(config.retransmit_interval_s),
            )
        });
        Ok(DemoSoftware {
            queue: NavQueue::new(config.nav_policy, config.nav_capacity),
            machine,
            config,
            local: BTreeMap::new(),
            latest_pvt: None,
        })
    }

    /// A process definition that builds this software with `config`.
    pub fn def(name: &str, heap_limit: u64, config: DemoConfig) -> ProcessDef {
        ProcessDef::new(name, heap_limit, move |ctx| {
            Ok(Box::new(DemoSoftware::new(config.clone(), ctx)?))
        })
    }

    pub fn mode(&self) -> Option<Mode> {
        self.machine.as_ref().map(|m| m.mode)
    }

    fn on_gnss(&mut self, epoch: &GnssEpoch, ctx: &mut ProcessContext<'_>) {
        let Some(pvt) = &epoch.pvt else { return };
        let sec = epoch.t.whole_secs();
        self.local.insert(sec, pvt.position);
        while self.local.len() > LOCAL_HISTORY {
            self.local.pop_first();
        }
        self.latest_pvt = Some(pvt.clone());
        let every = self.config.nav_share_interval_s;
        if let (Some(peer), true) = (&self.config.peer, every > 0 && sec % every.max(1) == 0) {
            ctx.emit(Output::CrosslinkSend {
                to: peer.clone(),
                bytes: Message::Measurement {
                    epoch: sec,
                    position: pvt.position,
                    velocity: pvt.velocity,
                }
                .encode(),
            });
        }
    }

    fn on_measurement(
        &mut self,
        mut entry: NavEntry,
        from: &str,
        ctx: &mut ProcessContext<'_>,
    ) -> Result<(), FaultReason> {
        entry.addr = ctx.alloc(NAV_ENTRY_BYTES)?;
        match self.queue.nav_ingest(entry) {
            Ok(Ingest::Stored { evicted }) => {
                for e in evicted {
                    ctx.free(e.addr)?;
                }
            }
            Ok(Ingest::Duplicate) => ctx.free(entry.addr)?,
            Err(f) => return Err(f),
        }
        if let Ok(rel) = relative_nav_update(&self.local, &self.queue) {
            ctx.emit(Output::Observation(json!({
                "kind": "relnav",
                "peer": from,
                "epoch": rel.epoch,
                "estimate": rel.estimate,
            })));
        }
        Ok(())
    }

    fn on_command(&mut self, command: &str, ctx: &mut ProcessContext<'_>) -> Result<(), FaultReason> {
        let kind = match command {
            "begin_observation" => Some(SyncKind::Begin),
            "end_observation" => Some(SyncKind::End),
            _ => None,
        };
        if let Some(kind) = kind {
            let Some(m) = self.machine.as_mut() else {
                ctx.emit(Output::Telemetry(json!({"ignored_command": command})));
                return Ok(());
            };
            for o in m.sync_handle_event(kind, Source::Local, ctx.now())? {
                ctx.emit(o);
            }
            return Ok(());
        }
        match command {
            "plan" => match self.config.workload {
                Some(w) => {
                    let peak = w.run_matrix_workload(ctx)?;
                    ctx.emit(Output::Telemetry(json!({
                        "workload": w.representation,
                        "n": w.n,
                        "peak_allocated": peak,
                    })));
                }
                None => ctx.emit(Output::Telemetry(json!({"ignored_command": command}))),
            },
            "transfer" => self.plan_transfer(ctx),
            _ => ctx.emit(Output::Telemetry(json!({"unknown_command": command}))),
        }
        Ok(())
    }

    /// Two-impulse transfer to the target radius, planned from the latest PVT.
    fn plan_transfer(&mut self, ctx: &mut ProcessContext<'_>) {
        let (Some(r2), Some(pvt)) = (self.config.transfer_target_radius_m, &self.latest_pvt) else {
            ctx.emit(Output::Telemetry(json!({"transfer": "unavailable"})));
            return;
        };
        let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let r1 = norm(&pvt.position);
        let speed = norm(&pvt.velocity);
        let a_t = 0.5 * (r1 + r2);
        let v_depart = (EARTH_MU * (2.0 / r1 - 1.0 / a_t)).sqrt();
        let v_arrive = (EARTH_MU * (2.0 / r2 - 1.0 / a_t)).sqrt();
        let dv1 = v_depart - speed;
        let dv2 = (EARTH_MU / r2).sqrt() - v_arrive;
        let now = ctx.now();
        let coast = std::f64::consts::PI * (a_t.powi(3) / EARTH_MU).sqrt();
        ctx.emit(Output::Maneuver {
            at: now,
            dv_rtn: [0.0, dv1, 0.0],
        });
        ctx.emit(Output::Maneuver {
            at: now.after_secs(coast),
            dv_rtn: [0.0, dv2, 0.0],
        });
        ctx.emit(Output::Telemetry(
            json!({"transfer": {"dv1": dv1, "dv2": dv2, "coast_s": coast}}),
        ));
    }
}

impl FlightSoftware for DemoSoftware {
    fn handle(&mut self, input: &Input, ctx: &mut ProcessContext<'_>) -> Result<(), FaultReason> {
        match input {
            Input::Gnss(epoch) => self.on_gnss(epoch, ctx),
            Input::GroundCommand(c) => self.on_command(c, ctx)?,
            Input::Tick => {
                if let Some(m) = self.machine.as_mut() {
                    for o in m.on_tick(ctx.now()) {
                        ctx.emit(o);
                    }
                }
            }
            Input::Crosslink { from, bytes } => match Message::decode(bytes) {
                Ok(Message::Sync { seq, kind }) => {
                    if let Some(m) = self.machine.as_mut() {
                        for o in m.sync_handle_event(kind, Source::Crosslink { seq }, ctx.now())? {
                            ctx.emit(o);
                        }
                    }
                }
                Ok(Message::Ack { seq }) => {
                    if let Some(m) = self.machine.as_mut() {
                        m.on_ack(seq);
                    }
                }
                Ok(Message::Measurement {
                    epoch,
                    position,
                    velocity,
                }) => {
                    let entry = NavEntry {
                        epoch,
                        position,
                        velocity,
                        addr: 0,
                    };
                    self.on_measurement(entry, from, ctx)?;
                }
                Err(reason) => ctx.emit(Output::Telemetry(json!({"bad_message": reason}))),
            },
            Input::BusTelemetry(_) => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::HeapError;
    use crate::host::ProcessHost;
    use workload::Representation;

    const MB50: u64 = 50_000_000;

    fn host_with(workload: MatrixWorkload) -> (ProcessHost, usize) {
        let mut host = ProcessHost::new();
        let cfg = DemoConfig {
            workload: Some(workload),
            ..Default::default()
        };
        let id = host.spawn(&DemoSoftware::def("A", MB50, cfg), SimTime::ZERO).unwrap();
        (host, id)
    }

    #[test]
    fn dense_3000_exhausts_50_mb() {
        let (mut host, id) = host_with(MatrixWorkload {
            representation: Representation::Dense,
            n: 3000,
        });
        let f = host
            .deliver(id, &Input::GroundCommand("plan".into()), SimTime::ZERO)
            .unwrap_err();
        assert!(matches!(
            f.reason,
            FaultReason::Heap(HeapError::Exhausted {
                requested: 72_000_000,
                ..
            })
        ));
    }

    #[test]
    fn sparse_3000_has_20x_margin() {
        let (mut host, id) = host_with(MatrixWorkload {
            representation: Representation::Sparse,
            n: 3000,
        });
        let d = host
            .deliver(id, &Input::GroundCommand("plan".into()), SimTime::ZERO)
            .unwrap();
        assert!(d.heap.transient * 20 <= MB50);
        assert_eq!(d.heap.transient, STATE_BLOCK + 72_000);
        assert_eq!(d.heap.resting, STATE_BLOCK);
    }

    #[test]
    fn dense_100_fits() {
        let (mut host, id) = host_with(MatrixWorkload {
            representation: Representation::Dense,
            n: 100,
        });
        let d = host
            .deliver(id, &Input::GroundCommand("plan".into()), SimTime::ZERO)
            .unwrap();
        assert_eq!(d.heap.transient, STATE_BLOCK + 80_000);
        host.heap(id).check_invariants().unwrap();
    }
}
