use crate::time::SimTime;

use super::force::{acceleration, ForceModelConfig};
use super::{BodyState, DynamicsError, Vec3};

/// Advances a single body state by one integrator step.
pub trait Propagator {
    /// Nominal step used to partition long intervals, in nanoseconds.
    fn step_nanos(&self) -> i64;

    /// Advances `state` by `dt` seconds (`0 < dt <= step`). The caller sets the new epoch.
    fn step(&self, state: &BodyState, dt: f64) -> Result<BodyState, DynamicsError>;
}

/// Leaves the kinematic state untouched; turns the hybrid loop into a pure discrete-event one.
#[derive(Debug, Clone, Copy)]
pub struct IdentityPropagator {
    pub step_nanos: i64,
}

impl Default for IdentityPropagator {
    fn default() -> Self {
        IdentityPropagator {
            step_nanos: SimTime::from_secs(10).as_nanos(),
        }
    }
}

impl Propagator for IdentityPropagator {
    fn step_nanos(&self) -> i64 {
        self.step_nanos
    }

    fn step(&self, state: &BodyState, _dt: f64) -> Result<BodyState, DynamicsError> {
        Ok(state.clone())
    }
}

/// Classical fourth-order Runge-Kutta over [`acceleration`].
#[derive(Debug, Clone, Copy)]
pub struct Rk4Propagator {
    pub config: ForceModelConfig,
}

impl Rk4Propagator {
    pub fn new(config: ForceModelConfig) -> Result<Self, DynamicsError> {
        config.validate()?;
        Ok(Rk4Propagator { config })
    }
}

impl Propagator for Rk4Propagator {
    fn step_nanos(&self) -> i64 {
        SimTime::from_secs_f64(self.config.integrator_step).as_nanos()
    }

    fn step(&self, s: &BodyState, h: f64) -> Result<BodyState, DynamicsError> {
        let cfg = &self.config;
        let b = &s.ballistics;
        let deriv = |r: &Vec3, v: &Vec3| (*v, acceleration(r, v, cfg, b));

        let (k1r, k1v) = deriv(&s.position, &s.velocity);
        let (k2r, k2v) = deriv(&(s.position + k1r * (h / 2.0)), &(s.velocity + k1v * (h / 2.0)));
        let (k3r, k3v) = deriv(&(s.position + k2r * (h / 2.0)), &(s.velocity + k2v * (h / 2.0)));
        let (k4r, k4v) = deriv(&(s.position + k3r * h), &(s.velocity + k3v * h));

        let mut out = s.clone();
        out.position = s.position + (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
        out.velocity = s.velocity + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        if out.position.norm() < cfg.earth_radius {
            return Err(DynamicsError::Reentry {
                body: s.body,
                time: s.epoch,
                radius: out.position.norm(),
            });
        }
        Ok(out)
    }
}

/// Propagates `state` to time `t`: whole steps from the state's epoch, then one partial step.
pub fn propagate_to(prop: &dyn Propagator, state: &BodyState, t: SimTime) -> Result<BodyState, DynamicsError> {
    if t < state.epoch {
        return Err(DynamicsError::TimeReversal {
            body: state.body,
            requested: t,
            epoch: state.epoch,
        });
    }
    let h = prop.step_nanos();
    let mut s = state.clone();
    while (t - s.epoch).as_nanos() >= h {
        s = advance(prop, &s, h)?;
    }
    let rem = (t - s.epoch).as_nanos();
    if rem > 0 {
        s = advance(prop, &s, rem)?;
    }
    Ok(s)
}

/// Propagates by `dt` seconds; `dt = 0` returns the input unchanged.
pub fn propagate(prop: &dyn Propagator, state: &BodyState, dt: f64) -> Result<BodyState, DynamicsError> {
    propagate_to(prop, state, state.epoch.after_secs(dt.max(0.0)))
}

pub(super) fn advance(prop: &dyn Propagator, s: &BodyState, dt_nanos: i64) -> Result<BodyState, DynamicsError> {
    let epoch = s.epoch + SimTime::from_nanos(dt_nanos);
    let mut next = prop
        .step(s, SimTime::from_nanos(dt_nanos).as_secs_f64())
        .map_err(|e| match e {
            DynamicsError::Reentry { body, radius, .. } => DynamicsError::Reentry {
                body,
                time: epoch,
                radius,
            },
            other => other,
        })?;
    next.epoch = epoch;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Ballistics, BodyId, EARTH_MU};

    fn circular(a: f64) -> BodyState {
        BodyState {
            body: BodyId(0),
            epoch: SimTime::ZERO,
            position: Vec3::new(a, 0.0, 0.0),
            velocity: Vec3::new(0.0, (EARTH_MU / a).sqrt(), 0.0),
            ballistics: Ballistics::default(),
        }
    }

    fn rk4(step: f64) -> Rk4Propagator {
        Rk4Propagator::new(ForceModelConfig {
            integrator_step: step,
            ..ForceModelConfig::two_body()
        })
        .unwrap()
    }

    #[test]
    fn zero_dt_is_identity() {
        let s = circular(6_878_000.0);
        let out = propagate(&rk4(10.0), &s, 0.0).unwrap();
        assert!(out.bits_eq(&s));
    }

    #[test]
    fn whole_step_partition_composes() {
        let p = rk4(5.0);
        let s = circular(6_878_000.0);
        let once = propagate(&p, &s, 10.0).unwrap();
        let twice = propagate(&p, &propagate(&p, &s, 5.0).unwrap(), 5.0).unwrap();
        assert!(once.bits_eq(&twice));
    }

    #[test]
    fn partial_step_lands_on_target() {
        let p = rk4(10.0);
        let s = circular(6_878_000.0);
        let out = propagate(&p, &s, 23.5).unwrap();
        assert_eq!(out.epoch, SimTime::from_millis(23_500));
    }

    #[test]
    fn energy_conserved_over_one_orbit() {
        let a = 6_878_000.0;
        let p = rk4(10.0);
        let s = circular(a);
        let period = 2.0 * std::f64::consts::PI * (a.powi(3) / EARTH_MU).sqrt();
        let out = propagate(&p, &s, period).unwrap();
        let e0 = s.specific_energy(EARTH_MU);
        let e1 = out.specific_energy(EARTH_MU);
        assert!(((e1 - e0) / e0).abs() < 1e-8);
        let h0 = s.position.cross(&s.velocity).norm();
        let h1 = out.position.cross(&out.velocity).norm();
        assert!(((h1 - h0) / h0).abs() < 1e-8);
    }

    #[test]
    fn closes_after_analytic_period() {
        let a = 6_878_000.0;
        let p = rk4(1.0);
        let s = circular(a);
        let period = 2.0 * std::f64::consts::PI * (a.powi(3) / EARTH_MU).sqrt();
        let out = propagate(&p, &s, period).unwrap();
        // Period is rounded to the nanosecond: ~7.6 µm of along-track motion at most.
        assert!(
            (out.position - s.position).norm() < 1e-3,
            "{}",
            (out.position - s.position).norm()
        );
    }

    #[test]
    fn reentry_is_detected() {
        let mut s = circular(6_478_000.0);
        s.velocity *= 0.5;
        let err = propagate(&rk4(10.0), &s, 3_000.0).unwrap_err();
        assert!(matches!(err, DynamicsError::Reentry { .. }));
    }

    #[test]
    fn identity_propagator_only_moves_epoch() {
        let s = circular(7e6);
        let out = propagate(&IdentityPropagator::default(), &s, 123.4).unwrap();
        assert_eq!(out.position, s.position);
        assert_eq!(out.epoch, SimTime::from_millis(123_400));
    }
}
