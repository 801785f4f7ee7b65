//! Continuous orbit dynamics.
//!
//! Ground truth is stored as Cartesian Earth-centered inertial state and
//! propagated with fixed-step RK4 over a point-mass + J2 + exponential drag
//! force model. [`Continuum`] holds the states of all bodies and advances
//! them lazily, only when an event asks for them.

mod continuum;
mod elements;
mod force;
mod propagate;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

pub use continuum::Continuum;
pub use elements::{eccentric_anomaly, relative_elements, rtn_basis, wrap_pi, KeplerElements, RelativeElements};
pub use force::{acceleration, Atmosphere, ForceModelConfig};
pub use propagate::{propagate, propagate_to, IdentityPropagator, Propagator, Rk4Propagator};

pub type Vec3 = Vector3<f64>;

/// Earth equatorial radius, m.
pub const EARTH_RADIUS: f64 = 6_378_137.0;
/// Earth gravitational parameter, m³/s².
pub const EARTH_MU: f64 = 3.986_004_418e14;
/// Second zonal harmonic.
pub const EARTH_J2: f64 = 1.082_626_68e-3;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_0e-5;

/// Index of a body inside a [`Continuum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BodyId(pub usize);

/// Ballistic properties of a cannonball spacecraft model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ballistics {
    /// kg
    pub mass: f64,
    /// m²
    pub drag_area: f64,
    pub cd: f64,
    /// m²
    pub srp_area: f64,
    pub cr: f64,
}

impl Default for Ballistics {
    fn default() -> Self {
        Ballistics {
            mass: 10.0,
            drag_area: 0.1,
            cd: 2.2,
            srp_area: 0.1,
            cr: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyState {
    pub body: BodyId,
    pub epoch: SimTime,
    /// m, ECI
    pub position: Vec3,
    /// m/s, ECI
    pub velocity: Vec3,
    pub ballistics: Ballistics,
}

impl BodyState {
    pub fn radius(&self) -> f64 {
        self.position.norm()
    }

    /// Two-body specific orbital energy, J/kg.
    pub fn specific_energy(&self, mu: f64) -> f64 {
        0.5 * self.velocity.norm_squared() - mu / self.position.norm()
    }

    /// Bitwise equality of the kinematic state, used by replay checks.
    pub fn bits_eq(&self, other: &BodyState) -> bool {
        self.epoch == other.epoch
            && self
                .position
                .iter()
                .chain(self.velocity.iter())
                .zip(other.position.iter().chain(other.velocity.iter()))
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("body {body:?} re-entered at {time} (radius {radius:.1} m)")]
    Reentry { body: BodyId, time: SimTime, radius: f64 },
    #[error("state of {body:?} requested at {requested}, already at {epoch}")]
    TimeReversal {
        body: BodyId,
        requested: SimTime,
        epoch: SimTime,
    },
    #[error("states are at different epochs ({chief} vs {deputy})")]
    EpochMismatch { chief: SimTime, deputy: SimTime },
    #[error("chief orbit is not elliptic (e = {0})")]
    HyperbolicChief(f64),
    #[error("unknown body {0:?}")]
    UnknownBody(BodyId),
    #[error("integrator step {0} s is outside [1, 10] s")]
    BadStep(f64),
}
