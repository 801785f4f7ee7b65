//! Integer simulation time.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

pub const NANOS_PER_SEC: i64 = 1_000_000_000;

/// Nanoseconds since the scenario epoch.
///
/// Time is kept as an integer so that event ordering and replay are exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(i64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(i64::MAX);

    pub const fn from_nanos(ns: i64) -> Self {
        SimTime(ns)
    }

    pub const fn from_millis(ms: i64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        SimTime(s * NANOS_PER_SEC)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * NANOS_PER_SEC as f64).round() as i64)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    /// Whole seconds, truncated toward negative infinity.
    pub const fn whole_secs(self) -> i64 {
        self.0.div_euclid(NANOS_PER_SEC)
    }

    pub const fn is_whole_second(self) -> bool {
        self.0.rem_euclid(NANOS_PER_SEC) == 0
    }

    /// Time advanced by a (non-negative) number of seconds, rounded to the nanosecond.
    pub fn after_secs(self, s: f64) -> Self {
        self + SimTime::from_secs_f64(s)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = self.0.div_euclid(NANOS_PER_SEC);
        let nanos = self.0.rem_euclid(NANOS_PER_SEC);
        write!(f, "{secs}.{nanos:09}s")
    }
}
