//! Deterministic hybrid discrete-event simulator for distributed spacecraft
//! flight software.

// `!(x > 0.0)` is used on purpose to reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod dynamics;
pub mod fault;
pub mod fsw;
pub mod gnss;
pub mod harness;
pub mod heap;
pub mod host;
pub mod kernel;
pub mod rng;
pub mod scenario;
pub mod telemetry;
#[cfg(any(test, feature = "testing"))]
pub mod testing;
pub mod time;
pub mod world;

pub use fault::{Fault, FaultReason};
pub use kernel::{Context, Kernel, KernelError, RunSummary};
pub use time::SimTime;
