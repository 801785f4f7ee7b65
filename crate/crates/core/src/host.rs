//! Virtual flight-software processes.
//!
//! Every process is a value implementing [`FlightSoftware`]. The host calls
//! it once per input, hands it a [`ProcessContext`] for allocation and
//! output, and collects what it emitted. Allocation always goes to the heap
//! currently designated active; the host points that designation at the
//! process's own heap for the duration of a handler and puts it back on the
//! host heap afterwards, including when the handler faults or panics.

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;

use serde_json::Value;
use thiserror::Error;

use crate::fault::{Fault, FaultReason};
use crate::gnss::GnssEpoch;
use crate::heap::{Addr, HeapError, HeapImage, HeapStats};
use crate::kernel::EventId;
use crate::time::SimTime;

pub type ProcessId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InputKind {
    BusTelemetry,
    GnssMessage,
    Crosslink,
    GroundCommand,
    Tick,
}

impl InputKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InputKind::BusTelemetry => "bus_telemetry",
            InputKind::GnssMessage => "gnss_message",
            InputKind::Crosslink => "crosslink",
            InputKind::GroundCommand => "ground_command",
            InputKind::Tick => "tick",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    BusTelemetry(Value),
    Gnss(GnssEpoch),
    Crosslink { from: String, bytes: Vec<u8> },
    GroundCommand(String),
    Tick,
}

impl Input {
    pub fn kind(&self) -> InputKind {
        match self {
            Input::BusTelemetry(_) => InputKind::BusTelemetry,
            Input::Gnss(_) => InputKind::GnssMessage,
            Input::Crosslink { .. } => InputKind::Crosslink,
            Input::GroundCommand(_) => InputKind::GroundCommand,
            Input::Tick => InputKind::Tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    /// Impulsive burn at `at`, m/s in the radial / transverse / normal frame.
    Maneuver {
        at: SimTime,
        dv_rtn: [f64; 3],
    },
    Observation(Value),
    MissionMode(String),
    CrosslinkSend {
        to: String,
        bytes: Vec<u8>,
    },
    Telemetry(Value),
    TickRequest(SimTime),
}

impl Output {
    pub fn kind(&self) -> &'static str {
        match self {
            Output::Maneuver { .. } => "maneuver",
            Output::Observation(_) => "observation",
            Output::MissionMode(_) => "mission_mode",
            Output::CrosslinkSend { .. } => "crosslink_send",
            Output::Telemetry(_) => "telemetry",
            Output::TickRequest(_) => "tick_request",
        }
    }
}

/// Which heap `alloc` and friends currently act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveHeap {
    Host,
    Process(ProcessId),
}

/// All heaps of one simulation plus the active-heap designation.
#[derive(Debug)]
pub struct HeapArena {
    host: HeapImage,
    processes: Vec<HeapImage>,
    active: ActiveHeap,
}

impl HeapArena {
    fn new() -> Self {
        HeapArena {
            host: HeapImage::new(u32::MAX as u64),
            processes: Vec::new(),
            active: ActiveHeap::Host,
        }
    }

    pub fn active(&self) -> ActiveHeap {
        self.active
    }

    pub fn current(&mut self) -> &mut HeapImage {
        match self.active {
            ActiveHeap::Host => &mut self.host,
            ActiveHeap::Process(p) => &mut self.processes[p],
        }
    }

    pub fn host_heap(&self) -> &HeapImage {
        &self.host
    }

    pub fn process_heap(&self, id: ProcessId) -> &HeapImage {
        &self.processes[id]
    }

    /// Runs `f` with `id`'s heap active, restoring the previous designation on
    /// every exit path. Panics inside `f` come back as [`FaultReason::Panic`].
    fn with_active<T>(
        &mut self,
        id: ProcessId,
        f: impl FnOnce(&mut HeapArena) -> Result<T, FaultReason>,
    ) -> Result<T, FaultReason> {
        let previous = self.active;
        self.active = ActiveHeap::Process(id);
        self.processes[id].begin_window();
        let result = catch_unwind(AssertUnwindSafe(|| f(self)));
        self.active = previous;
        match result {
            Ok(r) => r,
            Err(payload) => Err(FaultReason::Panic(panic_message(payload.as_ref()))),
        }
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// What a handler sees: the clock, the allocator, and the output sink.
pub struct ProcessContext<'a> {
    name: &'a str,
    now: SimTime,
    arena: &'a mut HeapArena,
    outputs: Vec<Output>,
}

impl<'a> ProcessContext<'a> {
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn process_name(&self) -> &str {
        self.name
    }

    pub fn emit(&mut self, output: Output) {
        self.outputs.push(output);
    }

    pub fn request_tick(&mut self, at: SimTime) {
        self.emit(Output::TickRequest(at));
    }

    pub fn alloc(&mut self, size: u64) -> Result<Addr, HeapError> {
        self.arena.current().allocate(size)
    }

    pub fn alloc_zeroed(&mut self, count: u64, size: u64) -> Result<Addr, HeapError> {
        self.arena.current().allocate_zeroed(count, size)
    }

    pub fn realloc(&mut self, addr: Addr, size: u64) -> Result<Addr, HeapError> {
        self.arena.current().reallocate(addr, size)
    }

    pub fn free(&mut self, addr: Addr) -> Result<(), HeapError> {
        self.arena.current().deallocate(addr)
    }

    pub fn write(&mut self, addr: Addr, offset: u32, data: &[u8]) -> Result<(), HeapError> {
        self.arena.current().write(addr, offset, data)
    }

    pub fn read(&mut self, addr: Addr, offset: u32, len: u32) -> Result<Vec<u8>, HeapError> {
        self.arena.current().read(addr, offset, len).map(<[u8]>::to_vec)
    }

    pub fn heap_stats(&mut self) -> HeapStats {
        self.arena.current().stats()
    }

    /// The heap allocations currently go to. Always this process's own while a handler runs.
    pub fn active_heap(&self) -> ActiveHeap {
        self.arena.active()
    }
}

/// One hosted flight-software instance.
pub trait FlightSoftware {
    fn handle(&mut self, input: &Input, ctx: &mut ProcessContext<'_>) -> Result<(), FaultReason>;
}

pub type Factory = Rc<dyn Fn(&mut ProcessContext<'_>) -> Result<Box<dyn FlightSoftware>, FaultReason>>;

#[derive(Clone)]
pub struct ProcessDef {
    pub name: String,
    pub heap_limit: u64,
    /// Builds the initial state; runs with the new process's heap active.
    pub factory: Factory,
}

impl ProcessDef {
    pub fn new<F>(name: &str, heap_limit: u64, factory: F) -> Self
    where
        F: Fn(&mut ProcessContext<'_>) -> Result<Box<dyn FlightSoftware>, FaultReason> + 'static,
    {
        ProcessDef {
            name: name.to_string(),
            heap_limit,
            factory: Rc::new(factory),
        }
    }
}

impl fmt::Debug for ProcessDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessDef")
            .field("name", &self.name)
            .field("heap_limit", &self.heap_limit)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpawnError {
    #[error("a process named {0:?} already exists")]
    DuplicateName(String),
    #[error(transparent)]
    Fault(#[from] Fault),
}

/// Heap levels observed around one handler call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeapSample {
    /// Allocated bytes after the handler returned.
    pub resting: u64,
    /// Highest allocated bytes while the handler ran.
    pub transient: u64,
    pub extent: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub outputs: Vec<Output>,
    pub heap: HeapSample,
}

pub struct VirtualProcess {
    pub id: ProcessId,
    pub name: String,
    software: Box<dyn FlightSoftware>,
    /// The single outstanding tick, if any.
    pub pending_tick: Option<(SimTime, EventId)>,
    pub deliveries: u64,
    pub max_transient: u64,
}

impl fmt::Debug for VirtualProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VirtualProcess")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("pending_tick", &self.pending_tick)
            .field("deliveries", &self.deliveries)
            .finish_non_exhaustive()
    }
}

#[derive(Debug)]
pub struct ProcessHost {
    processes: Vec<VirtualProcess>,
    by_name: BTreeMap<String, ProcessId>,
    arena: HeapArena,
}

impl Default for ProcessHost {
    fn default() -> Self {
        Self::new()
    }
}

impl ProcessHost {
    pub fn new() -> Self {
        ProcessHost {
            processes: Vec::new(),
            by_name: BTreeMap::new(),
            arena: HeapArena::new(),
        }
    }

    pub fn spawn(&mut self, def: &ProcessDef, now: SimTime) -> Result<ProcessId, SpawnError> {
        if self.by_name.contains_key(&def.name) {
            return Err(SpawnError::DuplicateName(def.name.clone()));
        }
        let id = self.arena.processes.len();
        self.arena.processes.push(HeapImage::new(def.heap_limit));
        let name = def.name.as_str();
        let factory = def.factory.clone();
        let built = self.arena.with_active(id, |arena| {
            let mut ctx = ProcessContext {
                name,
                now,
                arena,
                outputs: Vec::new(),
            };
            factory(&mut ctx)
        });
        let software = match built {
            Ok(s) => s,
            Err(reason) => {
                self.arena.processes.pop();
                return Err(SpawnError::Fault(Fault {
                    process: Some(def.name.clone()),
                    time: now,
                    reason,
                }));
            }
        };
        self.by_name.insert(def.name.clone(), id);
        self.processes.push(VirtualProcess {
            id,
            name: def.name.clone(),
            software,
            pending_tick: None,
            deliveries: 0,
            max_transient: 0,
        });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ProcessId> {
        self.by_name.get(name).copied()
    }

    pub fn process(&self, id: ProcessId) -> &VirtualProcess {
        &self.processes[id]
    }

    pub fn process_mut(&mut self, id: ProcessId) -> &mut VirtualProcess {
        &mut self.processes[id]
    }

    pub fn processes(&self) -> impl Iterator<Item = &VirtualProcess> {
        self.processes.iter()
    }

    pub fn len(&self) -> usize {
        self.processes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.processes.is_empty()
    }

    pub fn heap(&self, id: ProcessId) -> &HeapImage {
        self.arena.process_heap(id)
    }

    pub fn arena(&self) -> &HeapArena {
        &self.arena
    }

    /// Allocates on whatever heap is active right now; outside handlers that is the host heap.
    pub fn sentinel_alloc(&mut self, size: u64) -> Result<(ActiveHeap, Addr), HeapError> {
        let which = self.arena.active();
        self.arena.current().allocate(size).map(|a| (which, a))
    }

    /// Runs one handler. A pending tick is cleared before a tick input is handled.
    pub fn deliver(&mut self, id: ProcessId, input: &Input, now: SimTime) -> Result<Delivery, Fault> {
        if matches!(input, Input::Tick) {
            self.processes[id].pending_tick = None;
        }
        let proc_ = &mut self.processes[id];
        let name = proc_.name.as_str();
        let software = &mut proc_.software;
        let result = self.arena.with_active(id, |arena| {
            let mut ctx = ProcessContext {
                name,
                now,
                arena,
                outputs: Vec::new(),
            };
            software.handle(input, &mut ctx)?;
            Ok(ctx.outputs)
        });
        let heap = &self.arena.processes[id];
        let sample = HeapSample {
            resting: heap.allocated_bytes(),
            transient: heap.window_peak(),
            extent: heap.extent(),
        };
        proc_.deliveries += 1;
        proc_.max_transient = proc_.max_transient.max(sample.transient);
        match result {
            Ok(outputs) => Ok(Delivery { outputs, heap: sample }),
            Err(reason) => Err(Fault {
                process: Some(proc_.name.clone()),
                time: now,
                reason,
            }),
        }
    }
}
