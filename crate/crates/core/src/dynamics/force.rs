use serde::{Deserialize, Serialize};

use super::{Ballistics, DynamicsError, Vec3, EARTH_J2, EARTH_MU, EARTH_RADIUS, EARTH_ROTATION_RATE};

/// Exponential atmosphere `rho = rho0 * exp(-(h - h0) / H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Atmosphere {
    /// kg/m³ at the reference altitude
    pub rho0: f64,
    /// reference altitude, m
    pub h0: f64,
    /// scale height, m
    pub scale_height: f64,
}

impl Default for Atmosphere {
    fn default() -> Self {
        // 500 km band of the usual piecewise exponential table.
        Atmosphere {
            rho0: 6.967e-13,
            h0: 500_000.0,
            scale_height: 63_822.0,
        }
    }
}

impl Atmosphere {
    pub fn density(&self, altitude: f64) -> f64 {
        self.rho0 * (-(altitude - self.h0) / self.scale_height).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForceModelConfig {
    pub mu: f64,
    pub include_j2: bool,
    pub j2: f64,
    pub earth_radius: f64,
    pub include_drag: bool,
    pub atmosphere: Atmosphere,
    /// Fixed RK4 step, seconds. Must lie in [1, 10].
    pub integrator_step: f64,
}

impl Default for ForceModelConfig {
    fn default() -> Self {
        ForceModelConfig {
            mu: EARTH_MU,
            include_j2: true,
            j2: EARTH_J2,
            earth_radius: EARTH_RADIUS,
            include_drag: true,
            atmosphere: Atmosphere::default(),
            integrator_step: 10.0,
        }
    }
}

impl ForceModelConfig {
    pub fn two_body() -> Self {
        ForceModelConfig {
            include_j2: false,
            include_drag: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(1.0..=10.0).contains(&self.integrator_step) {
            return Err(DynamicsError::BadStep(self.integrator_step));
        }
        Ok(())
    }
}

/// Total acceleration, m/s².
pub fn acceleration(position: &Vec3, velocity: &Vec3, cfg: &ForceModelConfig, ballistics: &Ballistics) -> Vec3 {
    let r2 = position.norm_squared();
    let r = r2.sqrt();
    let mut acc = position * (-cfg.mu / (r2 * r));

    if cfg.include_j2 {
        let z2_r2 = position.z * position.z / r2;
        let k = -1.5 * cfg.j2 * cfg.mu * cfg.earth_radius * cfg.earth_radius / (r2 * r2 * r);
        acc += Vec3::new(
            k * position.x * (1.0 - 5.0 * z2_r2),
            k * position.y * (1.0 - 5.0 * z2_r2),
            k * position.z * (3.0 - 5.0 * z2_r2),
        );
    }

    if cfg.include_drag && ballistics.mass > 0.0 && ballistics.drag_area > 0.0 {
        let omega = Vec3::new(0.0, 0.0, EARTH_ROTATION_RATE);
        let v_rel = velocity - omega.cross(position);
        let rho = cfg.atmosphere.density(r - cfg.earth_radius);
        let b = ballistics.cd * ballistics.drag_area / ballistics.mass;
        acc -= v_rel * (0.5 * rho * b * v_rel.norm());
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_on_x_axis() {
        let cfg = ForceModelConfig::two_body();
        let a = acceleration(&Vec3::new(7e6, 0.0, 0.0), &Vec3::zeros(), &cfg, &Ballistics::default());
        let expected = -EARTH_MU / 4.9e13;
        assert!((a.x - expected).abs() <= 1e-14 * expected.abs());
        assert_eq!((a.y, a.z), (0.0, 0.0));
    }

    #[test]
    fn j2_has_no_out_of_plane_component_on_equator() {
        let cfg = ForceModelConfig {
            include_drag: false,
            ..Default::default()
        };
        let a = acceleration(
            &Vec3::new(5e6, 4e6, 0.0),
            &Vec3::new(0.0, 0.0, 7.5e3),
            &cfg,
            &Ballistics::default(),
        );
        assert_eq!(a.z, 0.0);
        // J2 strengthens radial pull on the equator.
        let pm = acceleration(
            &Vec3::new(5e6, 4e6, 0.0),
            &Vec3::zeros(),
            &ForceModelConfig::two_body(),
            &Ballistics::default(),
        );
        assert!(a.norm() > pm.norm());
    }

    #[test]
    fn drag_matches_scalar_hand_calculation() {
        let cfg = ForceModelConfig {
            include_j2: false,
            ..Default::default()
        };
        let b = Ballistics {
            mass: 12.0,
            drag_area: 0.3,
            cd: 2.2,
            ..Default::default()
        };
        // Over the pole the co-rotating wind vanishes, so v_rel == v.
        let r = EARTH_RADIUS + 500_000.0;
        let pos = Vec3::new(0.0, 0.0, r);
        let v = 7_612.0;
        let vel = Vec3::new(v, 0.0, 0.0);
        let drag = acceleration(&pos, &vel, &cfg, &b) - acceleration(&pos, &vel, &ForceModelConfig::two_body(), &b);
        let expected = 0.5 * 6.967e-13 * (2.2 * 0.3 / 12.0) * v * v;
        assert!(
            (drag.norm() - expected).abs() <= 1e-6 * expected,
            "{} vs {expected}",
            drag.norm()
        );
        assert!(drag.x < 0.0);
    }

    #[test]
    fn step_bounds() {
        let mut cfg = ForceModelConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.integrator_step = 0.5;
        assert!(cfg.validate().is_err());
        cfg.integrator_step = 11.0;
        assert!(cfg.validate().is_err());
    }
}
