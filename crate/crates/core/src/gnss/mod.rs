//! GPS constellation and receiver model.
//!
//! Satellites follow Kepler orbits with secular J2 drift of the node,
//! perigee and mean anomaly, plus a small random position perturbation per
//! epoch. Receivers see the satellites that are neither hidden by the Earth
//! nor below the antenna mask, and report pseudorange and carrier phase with
//! elevation-dependent noise and a per-pass integer ambiguity.

mod constellation;
mod receiver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

pub use constellation::{Constellation, ConstellationEpoch, GnssSatellite, SatelliteState, BUILTIN_ALMANAC};
pub use receiver::{
    visible_set, AttitudeProfile, GnssEpoch, GnssMeasurement, Pvt, Receiver, ReceiverConfig, Visibility,
};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// GPS L1 carrier frequency, Hz.
pub const L1_FREQUENCY: f64 = 1_575.42e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnssError {
    #[error("measurement epoch {0} is not on a whole GPS second")]
    EpochMisaligned(SimTime),
    #[error("no fix: only {visible} satellites visible")]
    NoFix { visible: usize },
    #[error("almanac line {line}: {reason}")]
    Almanac { line: usize, reason: String },
}

/// Noise standard deviation range, from best (zenith) to worst (horizon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaBounds {
    pub min: f64,
    pub max: f64,
}

impl SigmaBounds {
    /// Linear in elevation: `max` at the horizon, `min` at zenith.
    pub fn at(&self, elevation_deg: f64) -> f64 {
        let f = elevation_deg.clamp(0.0, 90.0) / 90.0;
        self.max * (1.0 - f) + self.min * f
    }
}

/// Pseudorange and carrier-phase sigma at the given elevation, meters.
pub fn elevation_sigma(elevation_deg: f64, pseudorange: &SigmaBounds, carrier: &SigmaBounds) -> (f64, f64) {
    (pseudorange.at(elevation_deg), carrier.at(elevation_deg))
}
