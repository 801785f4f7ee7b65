//! Event kernel: owns simulation time and the pending event set.
//!
//! Events are kept in a binary min-heap keyed by `(time, seq)`, where `seq` is
//! a counter assigned at scheduling time. Equal-time events therefore run in
//! the order they were scheduled. Cancelled events stay in the heap and are
//! skipped when dequeued.
//!
//! The kernel optionally owns a [`Continuum`]. Only events scheduled with
//! `needs_continuum` may touch it, which is what lets the continuous state be
//! propagated lazily.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use thiserror::Error;

use crate::dynamics::Continuum;
use crate::fault::{Fault, FaultReason};
use crate::time::SimTime;

/// Identifier of a scheduled event; equal to its insertion sequence number.
pub type EventId = u64;

/// Behavior run when an event is dequeued. Payload data travels as captured state.
pub type Action<W> = Box<dyn FnOnce(&mut Context<'_, W>) -> Result<(), Fault>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("cannot schedule at {requested}, simulation time is already {now}")]
    PastTime { requested: SimTime, now: SimTime },
    #[error("fault raised: {0}")]
    FaultRaised(Fault),
}

/// Counters returned by [`Kernel::run_until`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events_executed: u64,
    /// Number of executed events during which the continuum advanced at least one body.
    pub propagations_performed: u64,
    pub wall_seconds: f64,
    pub final_time: SimTime,
}

struct Event<W> {
    time: SimTime,
    seq: u64,
    needs_continuum: bool,
    action: Action<W>,
}

impl<W> PartialEq for Event<W> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<W> Eq for Event<W> {}

impl<W> PartialOrd for Event<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<W> Ord for Event<W> {
    // Reversed so that `BinaryHeap` pops the smallest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Pending events plus the scheduling clock.
pub struct EventQueue<W> {
    heap: BinaryHeap<Event<W>>,
    pending: HashSet<EventId>,
    next_seq: u64,
    now: SimTime,
}

impl<W> EventQueue<W> {
    fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(
        &mut self,
        time: SimTime,
        needs_continuum: bool,
        action: Action<W>,
    ) -> Result<EventId, KernelError> {
        if time < self.now {
            return Err(KernelError::PastTime {
                requested: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert(seq);
        self.heap.push(Event {
            time,
            seq,
            needs_continuum,
            action,
        });
        Ok(seq)
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        self.pending.remove(&id)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    fn pop_live(&mut self) -> Option<Event<W>> {
        while let Some(ev) = self.heap.pop() {
            if self.pending.remove(&ev.seq) {
                return Some(ev);
            }
        }
        None
    }
}

/// Handle given to an executing action.
pub struct Context<'a, W> {
    queue: &'a mut EventQueue<W>,
    continuum: Option<&'a mut Continuum>,
    continuum_present: bool,
    seq: u64,
    pub world: &'a mut W,
}

impl<'a, W> Context<'a, W> {
    pub fn now(&self) -> SimTime {
        self.queue.now
    }

    /// Sequence number of the executing event.
    pub fn current_seq(&self) -> u64 {
        self.seq
    }

    pub fn schedule(
        &mut self,
        time: SimTime,
        needs_continuum: bool,
        action: Action<W>,
    ) -> Result<EventId, KernelError> {
        self.queue.schedule(time, needs_continuum, action)
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        self.queue.cancel(id)
    }

    /// Continuous state access; only granted to events scheduled with `needs_continuum`.
    pub fn continuum(&mut self) -> Result<&mut Continuum, Fault> {
        match self.continuum.as_deref_mut() {
            Some(c) => Ok(c),
            None if self.continuum_present => Err(Fault::new(FaultReason::ContinuumNotRequested)),
            None => Err(Fault::new(FaultReason::NoContinuum)),
        }
    }

    /// Splits the context into the world and the continuum so both can be borrowed at once.
    pub fn split(&mut self) -> (&mut W, Result<&mut Continuum, Fault>) {
        let cont = match self.continuum.as_deref_mut() {
            Some(c) => Ok(c),
            None if self.continuum_present => Err(Fault::new(FaultReason::ContinuumNotRequested)),
            None => Err(Fault::new(FaultReason::NoContinuum)),
        };
        (&mut *self.world, cont)
    }
}

/// Deterministic hybrid event loop over a world state `W`.
pub struct Kernel<W> {
    queue: EventQueue<W>,
    continuum: Option<Continuum>,
    world: W,
    trace: Option<Vec<(SimTime, u64)>>,
    events_executed: u64,
    propagations: u64,
}

impl<W> Kernel<W> {
    pub fn new(world: W) -> Self {
        Self {
            queue: EventQueue::new(),
            continuum: None,
            world,
            trace: None,
            events_executed: 0,
            propagations: 0,
        }
    }

    pub fn with_continuum(world: W, continuum: Continuum) -> Self {
        let mut k = Self::new(world);
        k.continuum = Some(continuum);
        k
    }

    /// Records `(time, seq)` of every executed event.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[(SimTime, u64)] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn now(&self) -> SimTime {
        self.queue.now
    }

    pub fn world(&self) -> &W {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut W {
        &mut self.world
    }

    pub fn into_world(self) -> W {
        self.world
    }

    pub fn continuum(&self) -> Option<&Continuum> {
        self.continuum.as_ref()
    }

    pub fn continuum_mut(&mut self) -> Option<&mut Continuum> {
        self.continuum.as_mut()
    }

    pub fn pending_count(&self) -> usize {
        self.queue.pending_count()
    }

    pub fn events_executed(&self) -> u64 {
        self.events_executed
    }

    /// Executed events during which the continuum advanced, over the kernel's lifetime.
    pub fn propagations_performed(&self) -> u64 {
        self.propagations
    }

    pub fn schedule(
        &mut self,
        time: SimTime,
        needs_continuum: bool,
        action: Action<W>,
    ) -> Result<EventId, KernelError> {
        self.queue.schedule(time, needs_continuum, action)
    }

    /// Convenience for actions that never fault.
    pub fn schedule_fn<F>(&mut self, time: SimTime, f: F) -> Result<EventId, KernelError>
    where
        F: FnOnce(&mut Context<'_, W>) + 'static,
    {
        self.queue.schedule(
            time,
            false,
            Box::new(move |ctx| {
                f(ctx);
                Ok(())
            }),
        )
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        self.queue.cancel(id)
    }

    /// Executes every pending event with time `<= t_end`, then sets the clock to `t_end`.
    ///
    /// A faulting action halts the run at that event; the clock stays at the
    /// event's time and all other pending events remain queued.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<RunSummary, KernelError> {
        if t_end < self.queue.now {
            return Err(KernelError::PastTime {
                requested: t_end,
                now: self.queue.now,
            });
        }
        let started = Instant::now();
        let events_before = self.events_executed;
        let props_before = self.propagations;

        while let Some(t) = self.queue.peek_time() {
            if t > t_end {
                break;
            }
            let Some(ev) = self.queue.pop_live() else { break };
            if ev.time > t_end {
                // A cancelled head hid a later event; put it back untouched.
                self.queue.pending.insert(ev.seq);
                self.queue.heap.push(ev);
                break;
            }
            debug_assert!(ev.time >= self.queue.now);
            self.queue.now = ev.time;
            if let Some(trace) = self.trace.as_mut() {
                trace.push((ev.time, ev.seq));
            }
            self.events_executed += 1;

            let continuum_present = self.continuum.is_some();
            let advances_before = self.continuum.as_ref().map_or(0, Continuum::advance_count);
            let continuum = if ev.needs_continuum {
                self.continuum.as_mut()
            } else {
                None
            };
            let mut ctx = Context {
                queue: &mut self.queue,
                continuum,
                continuum_present,
                seq: ev.seq,
                world: &mut self.world,
            };
            let result = (ev.action)(&mut ctx);
            if self.continuum.as_ref().map_or(0, Continuum::advance_count) != advances_before {
                self.propagations += 1;
            }
            if let Err(mut fault) = result {
                fault.time = ev.time;
                return Err(KernelError::FaultRaised(fault));
            }
        }
        self.queue.now = t_end;
        Ok(RunSummary {
            events_executed: self.events_executed - events_before,
            propagations_performed: self.propagations - props_before,
            wall_seconds: started.elapsed().as_secs_f64(),
            final_time: t_end,
        })
    }
}
