//! The simulated environment around the hosted processes.
//!
//! [`FlightWorld`] is the kernel's world state: the process host, the radio
//! links, the GNSS receivers, the telemetry log, and the bookkeeping that
//! binds processes to spacecraft bodies. The free functions in this module
//! are the event actions that move inputs into processes and route their
//! outputs back out.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde_json::{json, Value};

use crate::comms::{CommsModel, SendOutcome};
use crate::dynamics::{BodyId, Vec3};
use crate::fault::{Fault, FaultReason};
use crate::gnss::{Constellation, Receiver};
use crate::host::{HeapSample, Input, Output, ProcessHost, ProcessId};
use crate::kernel::{Context, Kernel, KernelError};
use crate::rng::RngStream;
use crate::telemetry::TelemetryLog;
use crate::time::SimTime;

/// How long truth positions are kept for scoring relative navigation.
const TRUTH_HISTORY_S: i64 = 600;

pub type FlightContext<'a> = Context<'a, FlightWorld>;

/// Constellation plus one receiver per GNSS-equipped process.
#[derive(Debug)]
pub struct GnssSystem {
    pub constellation: Constellation,
    pub receivers: BTreeMap<ProcessId, Receiver>,
    /// Log every raw measurement to telemetry.
    pub log_measurements: bool,
}

/// Running heap figures of one process between telemetry samples.
#[derive(Debug, Clone, Copy, Default)]
struct HeapWindow {
    next_sample: SimTime,
    transient: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NavError {
    pub t: SimTime,
    pub process: String,
    pub error: f64,
}

pub struct FlightWorld {
    pub host: ProcessHost,
    pub comms: CommsModel,
    pub gnss: Option<GnssSystem>,
    /// Spacecraft body each process flies on.
    pub bindings: BTreeMap<ProcessId, BodyId>,
    pub telemetry: TelemetryLog,
    /// Maximum delivery jitter in seconds and its stream, per process.
    pub jitter: BTreeMap<ProcessId, (f64, RngStream)>,
    pub heap_sample_interval: Option<SimTime>,
    heap_windows: BTreeMap<ProcessId, HeapWindow>,
    /// Truth positions by whole second, for scoring navigation.
    truth: BTreeMap<i64, BTreeMap<BodyId, Vec3>>,
    pub nav_errors: Vec<NavError>,
    /// Test hook: stamps wall-clock time into telemetry, breaking replay on purpose.
    pub inject_wall_clock: bool,
}

impl Default for FlightWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl FlightWorld {
    pub fn new() -> Self {
        FlightWorld {
            host: ProcessHost::new(),
            comms: CommsModel::new(),
            gnss: None,
            bindings: BTreeMap::new(),
            telemetry: TelemetryLog::new(),
            jitter: BTreeMap::new(),
            heap_sample_interval: None,
            heap_windows: BTreeMap::new(),
            truth: BTreeMap::new(),
            nav_errors: Vec::new(),
            inject_wall_clock: false,
        }
    }

    fn process_name(&self, id: ProcessId) -> String {
        self.host.process(id).name.clone()
    }

    fn record_heap(&mut self, id: ProcessId, now: SimTime, sample: HeapSample) {
        let Some(interval) = self.heap_sample_interval else {
            return;
        };
        let w = self.heap_windows.entry(id).or_default();
        w.transient = w.transient.max(sample.transient);
        if now >= w.next_sample {
            let payload = json!({
                "resting": sample.resting,
                "transient": w.transient,
                "extent": sample.extent,
            });
            w.transient = 0;
            w.next_sample = SimTime::from_nanos((now.as_nanos() / interval.as_nanos() + 1) * interval.as_nanos());
            let name = self.process_name(id);
            self.telemetry.push(now, &name, "heap", payload);
        }
    }

    fn score_relnav(&mut self, id: ProcessId, now: SimTime, obs: &Value) {
        if obs.get("kind").and_then(Value::as_str) != Some("relnav") {
            return;
        }
        let (Some(epoch), Some(peer), Some(est)) = (
            obs.get("epoch").and_then(Value::as_i64),
            obs.get("peer").and_then(Value::as_str),
            obs.get("estimate").and_then(Value::as_array),
        ) else {
            return;
        };
        let est: Vec<f64> = est.iter().filter_map(Value::as_f64).collect();
        let (Some(&local), Some(peer_body)) = (
            self.bindings.get(&id),
            self.host.id(peer).and_then(|p| self.bindings.get(&p)),
        ) else {
            return;
        };
        let Some(at) = self.truth.get(&epoch) else { return };
        let (Some(l), Some(r)) = (at.get(&local), at.get(peer_body)) else {
            return;
        };
        if est.len() != 3 {
            return;
        }
        let error = (Vec3::new(est[0], est[1], est[2]) - (r - l)).norm();
        let process = self.process_name(id);
        self.telemetry.push(
            now,
            "harness",
            "nav_error",
            json!({"process": process, "epoch": epoch, "error": error}),
        );
        self.nav_errors.push(NavError { t: now, process, error });
    }
}

/// Runs one handler and routes everything it emitted.
pub fn deliver_input(ctx: &mut FlightContext<'_>, id: ProcessId, input: Input) -> Result<(), Fault> {
    let now = ctx.now();
    let delivery = ctx.world.host.deliver(id, &input, now)?;
    ctx.world.record_heap(id, now, delivery.heap);
    for output in delivery.outputs {
        route_output(ctx, id, output)?;
    }
    Ok(())
}

/// `at` pushed back by the delivery jitter configured for process `id`.
fn jittered(world: &mut FlightWorld, id: ProcessId, at: SimTime) -> SimTime {
    match world.jitter.get_mut(&id) {
        Some((max, rng)) if *max > 0.0 => at.after_secs(rng.random::<f64>() * *max),
        _ => at,
    }
}

fn kernel_fault(e: KernelError) -> Fault {
    match e {
        KernelError::PastTime { requested, now } => Fault::new(FaultReason::PastTick { requested, now }),
        KernelError::FaultRaised(f) => f,
    }
}

/// Sends one output of process `id` to the model that consumes it.
pub fn route_output(ctx: &mut FlightContext<'_>, id: ProcessId, output: Output) -> Result<(), Fault> {
    let now = ctx.now();
    let name = ctx.world.process_name(id);
    let in_proc = |reason: FaultReason| Fault::new(reason).in_process(name.clone());
    match output {
        Output::CrosslinkSend { to, bytes } => {
            let Some(dst) = ctx.world.host.id(&to) else {
                return Err(in_proc(FaultReason::UnknownLinkTarget(to)));
            };
            let Some(link) = ctx.world.comms.link_mut(&name, &to) else {
                return Err(in_proc(FaultReason::UnknownLinkTarget(to)));
            };
            match link.send(now) {
                SendOutcome::Dropped { send_seq } => {
                    ctx.world
                        .telemetry
                        .push(now, &name, "crosslink_drop", json!({"to": to, "seq": send_seq}));
                }
                SendOutcome::Deliver { at, send_seq, .. } => {
                    let at = jittered(ctx.world, dst, at);
                    let from = name.clone();
                    let (src, dst_name) = (name.clone(), to.clone());
                    ctx.schedule(
                        at,
                        false,
                        Box::new(move |ctx| {
                            let reordered = ctx
                                .world
                                .comms
                                .link_mut(&src, &dst_name)
                                .map(|l| l.record_delivery(send_seq))
                                .unwrap_or(false);
                            if reordered {
                                let t = ctx.now();
                                ctx.world.telemetry.push(
                                    t,
                                    &dst_name,
                                    "crosslink_reordered",
                                    json!({"from": src, "seq": send_seq}),
                                );
                            }
                            deliver_input(ctx, dst, Input::Crosslink { from, bytes })
                        }),
                    )
                    .map_err(kernel_fault)?;
                }
            }
        }
        Output::Maneuver { at, dv_rtn } => {
            let Some(&body) = ctx.world.bindings.get(&id) else {
                return Err(in_proc(FaultReason::Other(
                    "maneuver from a process without a spacecraft".into(),
                )));
            };
            ctx.schedule(
                at,
                true,
                Box::new(move |ctx| {
                    let t = ctx.now();
                    let (world, continuum) = ctx.split();
                    continuum?.apply_impulse(body, t, dv_rtn)?;
                    let mag = Vec3::from(dv_rtn).norm();
                    let name = world.process_name(id);
                    world
                        .telemetry
                        .push(t, &name, "maneuver_applied", json!({"dv_rtn": dv_rtn, "dv": mag}));
                    Ok(())
                }),
            )
            .map_err(|e| kernel_fault(e).in_process(name.clone()))?;
            ctx.world
                .telemetry
                .push(now, &name, "maneuver", json!({"at": at.as_nanos(), "dv_rtn": dv_rtn}));
        }
        Output::Observation(v) => {
            ctx.world.telemetry.push(now, &name, "observation", v.clone());
            ctx.world.score_relnav(id, now, &v);
        }
        Output::MissionMode(mode) => ctx.world.telemetry.push(now, &name, "mission_mode", Value::from(mode)),
        Output::Telemetry(v) => ctx.world.telemetry.push(now, &name, "telemetry", v),
        Output::TickRequest(at) => {
            if at < now {
                return Err(in_proc(FaultReason::PastTick { requested: at, now }));
            }
            if let Some((_, old)) = ctx.world.host.process_mut(id).pending_tick.take() {
                ctx.cancel(old);
            }
            let ev = ctx
                .schedule(at, false, Box::new(move |ctx| deliver_input(ctx, id, Input::Tick)))
                .map_err(kernel_fault)?;
            ctx.world.host.process_mut(id).pending_tick = Some((at, ev));
        }
    }
    Ok(())
}

/// One GNSS epoch: measure for every receiver, deliver, and schedule the next epoch.
pub fn gnss_epoch(ctx: &mut FlightContext<'_>, end: SimTime) -> Result<(), Fault> {
    let now = ctx.now();
    let mut deliveries = Vec::new();
    {
        let (world, continuum) = ctx.split();
        let continuum = continuum?;
        let Some(gnss) = world.gnss.as_mut() else { return Ok(()) };
        let epoch = gnss.constellation.epoch(now);
        let mut truth = BTreeMap::new();
        for (&pid, rx) in gnss.receivers.iter_mut() {
            let Some(&body) = world.bindings.get(&pid) else {
                continue;
            };
            let state = continuum.request_state(body, now)?;
            truth.insert(body, state.position);
            let obs = rx
                .observe(&state, &epoch)
                .map_err(|e| Fault::new(e.into()).in_process(rx.name()))?;
            if gnss.log_measurements {
                let payload = serde_json::to_value(&obs.measurements).unwrap_or(Value::Null);
                world.telemetry.push(now, rx.name(), "gnss_measurements", payload);
            }
            deliveries.push((pid, obs));
        }
        let sec = now.whole_secs();
        world.truth.insert(sec, truth);
        while let Some((&oldest, _)) = world.truth.first_key_value() {
            if oldest >= sec - TRUTH_HISTORY_S {
                break;
            }
            world.truth.pop_first();
        }
        if world.inject_wall_clock {
            let nanos = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.subsec_nanos())
                .unwrap_or(0);
            world.telemetry.push(now, "harness", "wall_clock", Value::from(nanos));
        }
    }
    for (pid, obs) in deliveries {
        deliver_input(ctx, pid, Input::Gnss(obs))?;
    }
    let next = now + SimTime::from_secs(1);
    if next <= end {
        ctx.schedule(next, true, Box::new(move |ctx| gnss_epoch(ctx, end)))
            .map_err(kernel_fault)?;
    }
    Ok(())
}

/// Queues the first GNSS epoch at `start`; each epoch queues the next until `end`.
pub fn start_gnss(kernel: &mut Kernel<FlightWorld>, start: SimTime, end: SimTime) -> Result<(), KernelError> {
    kernel.schedule(start, true, Box::new(move |ctx| gnss_epoch(ctx, end)))?;
    Ok(())
}

/// Queues a ground command for process `id`, subject to its delivery jitter.
pub fn schedule_command(
    kernel: &mut Kernel<FlightWorld>,
    id: ProcessId,
    at: SimTime,
    command: String,
) -> Result<(), KernelError> {
    let at = jittered(kernel.world_mut(), id, at);
    kernel.schedule(
        at,
        false,
        Box::new(move |ctx| deliver_input(ctx, id, Input::GroundCommand(command))),
    )?;
    Ok(())
}
