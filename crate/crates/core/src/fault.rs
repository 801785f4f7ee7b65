//! Structured fault reports.
//!
//! A fault halts the whole simulation at the offending event. The report
//! names the process (when one was running), the simulation time, and why.

use std::fmt;

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::gnss::GnssError;
use crate::heap::HeapError;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultReason {
    #[error("invalid transition: {event} while {mode}")]
    InvalidTransition { event: String, mode: String },
    #[error("out-of-order measurement: epoch {epoch} arrived after {last}")]
    OutOfOrder { epoch: i64, last: i64 },
    #[error(transparent)]
    Heap(#[from] HeapError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Gnss(#[from] GnssError),
    #[error("flight software panicked: {0}")]
    Panic(String),
    #[error("no link to {0}")]
    UnknownLinkTarget(String),
    #[error("tick requested for {requested}, which is before {now}")]
    PastTick { requested: SimTime, now: SimTime },
    #[error("event touched continuous state without requesting it")]
    ContinuumNotRequested,
    #[error("no continuum installed")]
    NoContinuum,
    #[error("nondeterminism injected for testing")]
    Injected,
    #[error("{0}")]
    Other(String),
}

impl FaultReason {
    /// Stable name of the fault class, used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            FaultReason::InvalidTransition { .. } => "InvalidTransition",
            FaultReason::OutOfOrder { .. } => "OutOfOrderFault",
            FaultReason::Heap(HeapError::Exhausted { .. }) => "MemoryExhaustionFault",
            FaultReason::Heap(HeapError::InvalidFree { .. }) => "InvalidFree",
            FaultReason::Heap(HeapError::ZeroSize) => "ZeroSize",
            FaultReason::Heap(HeapError::Overflow) => "Overflow",
            FaultReason::Heap(HeapError::BadAccess { .. }) => "BadAccess",
            FaultReason::Dynamics(DynamicsError::Reentry { .. }) => "ReentryFault",
            FaultReason::Dynamics(_) => "DynamicsError",
            FaultReason::Gnss(_) => "GnssError",
            FaultReason::Panic(_) => "HandlerFault",
            FaultReason::UnknownLinkTarget(_) => "UnknownLinkTarget",
            FaultReason::PastTick { .. } => "PastTime",
            FaultReason::ContinuumNotRequested => "ContinuumNotRequested",
            FaultReason::NoContinuum => "NoContinuum",
            FaultReason::Injected => "Injected",
            FaultReason::Other(_) => "Other",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub process: Option<String>,
    /// Filled in by the kernel with the time of the faulting event.
    pub time: SimTime,
    pub reason: FaultReason,
}

impl Fault {
    pub fn new(reason: FaultReason) -> Self {
        Fault {
            process: None,
            time: SimTime::ZERO,
            reason,
        }
    }

    pub fn in_process(mut self, name: impl Into<String>) -> Self {
        self.process = Some(name.into());
        self
    }
}

impl From<FaultReason> for Fault {
    fn from(reason: FaultReason) -> Self {
        Fault::new(reason)
    }
}

macro_rules! fault_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Fault {
            fn from(e: $t) -> Self {
                Fault::new(e.into())
            }
        }
    )*};
}

fault_from!(HeapError, DynamicsError, GnssError);

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.process {
            Some(p) => write!(f, "{} in {p} at {}: {}", self.reason.kind(), self.time, self.reason),
            None => write!(f, "{} at {}: {}", self.reason.kind(), self.time, self.reason),
        }
    }
}

impl std::error::Error for Fault {}
