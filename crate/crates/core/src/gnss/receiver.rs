use std::collections::BTreeMap;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rtn_basis, BodyState, Vec3, EARTH_RADIUS};
use crate::rng::{RngRoot, RngStream};
use crate::time::SimTime;

use super::{ConstellationEpoch, GnssError, SatelliteState, SigmaBounds, L1_FREQUENCY, SPEED_OF_LIGHT};

/// Body-to-inertial attitude as a function of orbital state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttitudeProfile {
    /// Body x along-track, y orbit normal, z radial (zenith).
    LocalVertical,
    /// Fixed inertial attitude, quaternion `[w, x, y, z]`.
    Inertial { quaternion: [f64; 4] },
}

impl AttitudeProfile {
    pub fn body_to_inertial(&self, state: &BodyState) -> Matrix3<f64> {
        match self {
            AttitudeProfile::LocalVertical => {
                let (r, t, n) = rtn_basis(&state.position, &state.velocity);
                Matrix3::from_columns(&[t, n, r])
            }
            AttitudeProfile::Inertial {
                quaternion: [w, x, y, z],
            } => UnitQuaternion::from_quaternion(Quaternion::new(*w, *x, *y, *z))
                .to_rotation_matrix()
                .into_inner(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverConfig {
    /// Antenna boresight, body frame.
    pub boresight: [f64; 3],
    pub attitude: AttitudeProfile,
    /// Intervals `[start_s, end_s)` during which the spacecraft is rolled 180° about body x.
    pub flips: Vec<[f64; 2]>,
    pub mask_deg: f64,
    pub pseudorange_sigma: SigmaBounds,
    pub carrier_sigma: SigmaBounds,
    /// Carrier wavelength, m.
    pub wavelength: f64,
    pub ambiguity_max: i32,
    /// Per-axis PVT position noise, m.
    pub pvt_position_sigma: f64,
    /// Per-axis PVT velocity noise, m/s.
    pub pvt_velocity_sigma: f64,
    pub measurement_noise: bool,
    pub pvt_noise: bool,
    pub ambiguities: bool,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            boresight: [0.0, 0.0, 1.0],
            attitude: AttitudeProfile::LocalVertical,
            flips: Vec::new(),
            mask_deg: 5.0,
            pseudorange_sigma: SigmaBounds {
                min: 0.1437,
                max: 2.2769,
            },
            carrier_sigma: SigmaBounds {
                min: 0.659e-3,
                max: 10.45e-3,
            },
            wavelength: SPEED_OF_LIGHT / L1_FREQUENCY,
            ambiguity_max: 5,
            pvt_position_sigma: 1.5,
            pvt_velocity_sigma: 0.03,
            measurement_noise: true,
            pvt_noise: true,
            ambiguities: true,
        }
    }
}

impl ReceiverConfig {
    /// Every random component switched off.
    pub fn noiseless() -> Self {
        ReceiverConfig {
            measurement_noise: false,
            pvt_noise: false,
            ambiguities: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, b) in [
            ("pseudorange_sigma", &self.pseudorange_sigma),
            ("carrier_sigma", &self.carrier_sigma),
        ] {
            if !(0.0 <= b.min && b.min < b.max) {
                return Err(format!("{name}: need 0 <= min < max, got {b:?}"));
            }
        }
        if Vec3::from(self.boresight).norm() == 0.0 {
            return Err("boresight must be nonzero".into());
        }
        if !(0.0..90.0).contains(&self.mask_deg) {
            return Err(format!("mask_deg {} outside [0, 90)", self.mask_deg));
        }
        if !(self.wavelength > 0.0) || self.ambiguity_max < 0 {
            return Err("wavelength must be positive and ambiguity_max non-negative".into());
        }
        Ok(())
    }

    /// Antenna boresight in the inertial frame at the state's epoch.
    pub fn boresight_inertial(&self, state: &BodyState) -> Vec3 {
        let mut body = Vec3::from(self.boresight).normalize();
        let t = state.epoch.as_secs_f64();
        if self.flips.iter().any(|[a, b]| (*a..*b).contains(&t)) {
            // 180° roll about body x.
            body = Vec3::new(body.x, -body.y, -body.z);
        }
        self.attitude.body_to_inertial(state) * body
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility {
    pub prn: u8,
    /// Degrees above the antenna boresight plane.
    pub elevation: f64,
}

fn earth_blocks(from: &Vec3, to: &Vec3) -> bool {
    let d = to - from;
    let s = (-from.dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (from + d * s).norm() < EARTH_RADIUS
}

/// Satellites that are not hidden by the Earth and sit at or above the mask,
/// using the unperturbed positions so the set only changes with geometry.
pub fn visible_set(receiver: &Vec3, boresight: &Vec3, satellites: &[SatelliteState], mask_deg: f64) -> Vec<Visibility> {
    let b = boresight.normalize();
    satellites
        .iter()
        .filter(|s| !earth_blocks(receiver, &s.nominal))
        .filter_map(|s| {
            let los = (s.nominal - receiver).normalize();
            let elevation = b.dot(&los).clamp(-1.0, 1.0).asin().to_degrees();
            (elevation >= mask_deg).then_some(Visibility { prn: s.prn, elevation })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssMeasurement {
    pub prn: u8,
    pub epoch: SimTime,
    /// m
    pub pseudorange: f64,
    /// m
    pub carrier_phase: f64,
    /// deg
    pub elevation: f64,
    pub sigma_pr: f64,
    pub sigma_cp: f64,
    /// True geometric range, m. Kept for analysis; flight software should not use it.
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pvt {
    pub t: SimTime,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

/// Everything one receiver reports for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssEpoch {
    pub t: SimTime,
    pub measurements: Vec<GnssMeasurement>,
    /// `None` when fewer than four satellites are visible.
    pub pvt: Option<Pvt>,
}

#[derive(Debug, Clone)]
pub struct Receiver {
    name: String,
    config: ReceiverConfig,
    noise: RngStream,
    ambiguity_rng: RngStream,
    pvt_rng: RngStream,
    /// Ambiguity of every PRN currently in lock.
    locks: BTreeMap<u8, i32>,
}

impl Receiver {
    pub fn new(name: &str, config: ReceiverConfig, rng: &mut RngRoot) -> Self {
        Receiver {
            noise: rng.stream(&format!("gnss:{name}:noise")),
            ambiguity_rng: rng.stream(&format!("gnss:{name}:ambiguity")),
            pvt_rng: rng.stream(&format!("gnss:{name}:pvt")),
            name: name.to_string(),
            config,
            locks: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn config(&self) -> &ReceiverConfig {
        &self.config
    }

    /// Integer ambiguity of `prn` in the current pass, if tracked.
    pub fn ambiguity(&self, prn: u8) -> Option<i32> {
        self.locks.get(&prn).copied()
    }

    pub fn visible(&self, state: &BodyState, epoch: &ConstellationEpoch) -> Vec<Visibility> {
        visible_set(
            &state.position,
            &self.config.boresight_inertial(state),
            &epoch.satellites,
            self.config.mask_deg,
        )
    }

    fn gaussian(rng: &mut RngStream, sigma: f64) -> f64 {
        sigma * rng.sample::<f64, _>(StandardNormal)
    }

    /// Pseudorange and carrier phase for every visible satellite; updates pass tracking.
    pub fn measure(
        &mut self,
        state: &BodyState,
        epoch: &ConstellationEpoch,
    ) -> Result<Vec<GnssMeasurement>, GnssError> {
        if !epoch.t.is_whole_second() {
            return Err(GnssError::EpochMisaligned(epoch.t));
        }
        let visible = self.visible(state, epoch);
        self.locks.retain(|prn, _| visible.iter().any(|v| v.prn == *prn));
        let by_prn: BTreeMap<u8, &SatelliteState> = epoch.satellites.iter().map(|s| (s.prn, s)).collect();
        let mut out = Vec::with_capacity(visible.len());
        for v in visible {
            let (sigma_pr, sigma_cp) =
                super::elevation_sigma(v.elevation, &self.config.pseudorange_sigma, &self.config.carrier_sigma);
            let ambiguity = match self.locks.get(&v.prn) {
                Some(n) => *n,
                None => {
                    let m = self.config.ambiguity_max;
                    let n = if self.config.ambiguities {
                        self.ambiguity_rng.random_range(-m..=m)
                    } else {
                        0
                    };
                    self.locks.insert(v.prn, n);
                    n
                }
            };
            let range = (by_prn[&v.prn].position - state.position).norm();
            out.push(self.observe_range(v.prn, epoch.t, range, v.elevation, ambiguity, sigma_pr, sigma_cp));
        }
        Ok(out)
    }

    /// Builds one measurement from a known range and geometry.
    #[allow(clippy::too_many_arguments)]
    fn observe_range(
        &mut self,
        prn: u8,
        t: SimTime,
        range: f64,
        elevation: f64,
        ambiguity: i32,
        sigma_pr: f64,
        sigma_cp: f64,
    ) -> GnssMeasurement {
        let (e_pr, e_cp) = if self.config.measurement_noise {
            (
                Self::gaussian(&mut self.noise, sigma_pr),
                Self::gaussian(&mut self.noise, sigma_cp),
            )
        } else {
            (0.0, 0.0)
        };
        GnssMeasurement {
            prn,
            epoch: t,
            pseudorange: range + e_pr,
            carrier_phase: range + self.config.wavelength * ambiguity as f64 + e_cp,
            elevation,
            sigma_pr,
            sigma_cp,
            range,
        }
    }

    /// Measurement of a synthetic satellite at a fixed range and elevation, tracked as `prn`.
    ///
    /// Pass tracking works as in [`Receiver::measure`]: `new_pass` drops the lock first.
    pub fn measure_fixed(
        &mut self,
        prn: u8,
        t: SimTime,
        range: f64,
        elevation: f64,
        new_pass: bool,
    ) -> GnssMeasurement {
        if new_pass {
            self.locks.remove(&prn);
        }
        let m = self.config.ambiguity_max;
        let ambiguity = match self.locks.get(&prn) {
            Some(n) => *n,
            None => {
                let n = if self.config.ambiguities {
                    self.ambiguity_rng.random_range(-m..=m)
                } else {
                    0
                };
                self.locks.insert(prn, n);
                n
            }
        };
        let (sigma_pr, sigma_cp) =
            super::elevation_sigma(elevation, &self.config.pseudorange_sigma, &self.config.carrier_sigma);
        self.observe_range(prn, t, range, elevation, ambiguity, sigma_pr, sigma_cp)
    }

    /// Truth plus per-axis Gaussian noise; needs four satellites in view.
    pub fn pvt_solution(&mut self, state: &BodyState, visible: usize) -> Result<Pvt, GnssError> {
        if visible < 4 {
            return Err(GnssError::NoFix { visible });
        }
        let (sp, sv) = if self.config.pvt_noise {
            (self.config.pvt_position_sigma, self.config.pvt_velocity_sigma)
        } else {
            (0.0, 0.0)
        };
        let rng = &mut self.pvt_rng;
        let mut noisy = |truth: f64, sigma: f64| truth + if sigma > 0.0 { Self::gaussian(rng, sigma) } else { 0.0 };
        let position: [f64; 3] = std::array::from_fn(|k| noisy(state.position[k], sp));
        let velocity: [f64; 3] = std::array::from_fn(|k| noisy(state.velocity[k], sv));
        Ok(Pvt {
            t: state.epoch,
            position,
            velocity,
        })
    }

    /// Measurements plus a PVT solution when one is available.
    pub fn observe(&mut self, state: &BodyState, epoch: &ConstellationEpoch) -> Result<GnssEpoch, GnssError> {
        let measurements = self.measure(state, epoch)?;
        let pvt = match self.pvt_solution(state, measurements.len()) {
            Ok(p) => Some(p),
            Err(GnssError::NoFix { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(GnssEpoch {
            t: epoch.t,
            measurements,
            pvt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Ballistics, BodyId, KeplerElements, EARTH_MU};
    use crate::gnss::Constellation;

    fn leo(t: SimTime) -> BodyState {
        let (position, velocity) = KeplerElements {
            a: 6_878_000.0,
            e: 0.001,
            i: 0.9,
            raan: 0.3,
            argp: 0.0,
            mean_anomaly: 0.0,
        }
        .to_cartesian(EARTH_MU);
        BodyState {
            body: BodyId(0),
            epoch: t,
            position,
            velocity,
            ballistics: Ballistics::default(),
        }
    }

    fn sat(prn: u8, p: Vec3) -> SatelliteState {
        SatelliteState {
            prn,
            nominal: p,
            position: p,
        }
    }

    #[test]
    fn occlusion_and_boresight() {
        let r = Vec3::new(7e6, 0.0, 0.0);
        let up = Vec3::x();
        let behind = sat(1, Vec3::new(-26e6, 0.0, 0.0));
        let zenith = sat(2, Vec3::new(26e6, 0.0, 0.0));
        let vis = visible_set(&r, &up, &[behind.clone(), zenith.clone()], 5.0);
        assert_eq!(vis.len(), 1);
        assert_eq!(vis[0].prn, 2);
        assert!((vis[0].elevation - 90.0).abs() < 1e-9);
        assert!(visible_set(&r, &-up, &[behind, zenith], 5.0).is_empty());
    }

    #[test]
    fn flipped_antenna_loses_the_sky_above() {
        let c = Constellation::builtin(3, 1.0);
        let e = c.epoch(SimTime::ZERO);
        let s = leo(SimTime::ZERO);
        let mut cfg = ReceiverConfig::default();
        let mut root = RngRoot::new(1);
        let upright = Receiver::new("A", cfg.clone(), &mut root).visible(&s, &e);
        assert!(upright.len() >= 4);
        cfg.flips.push([0.0, 100.0]);
        let flipped = Receiver::new("A", cfg.clone(), &mut root).visible(&s, &e);
        assert!(flipped.iter().all(|f| upright.iter().all(|u| u.prn != f.prn)));
        // Beyond the Earth's dip angle (about 21° at 500 km) nothing is left.
        cfg.mask_deg = 25.0;
        assert!(Receiver::new("A", cfg, &mut root).visible(&s, &e).is_empty());
    }

    #[test]
    fn noiseless_measurements_equal_range() {
        let c = Constellation::builtin(3, 1.0);
        let t = SimTime::from_secs(20);
        let mut rx = Receiver::new("A", ReceiverConfig::noiseless(), &mut RngRoot::new(1));
        let ms = rx.measure(&leo(t), &c.epoch(t)).unwrap();
        assert!(!ms.is_empty());
        for m in ms {
            assert_eq!(m.pseudorange, m.range);
            assert_eq!(m.carrier_phase, m.range);
        }
    }

    #[test]
    fn misaligned_epoch_rejected() {
        let c = Constellation::builtin(3, 1.0);
        let t = SimTime::from_millis(1500);
        let mut rx = Receiver::new("A", ReceiverConfig::default(), &mut RngRoot::new(1));
        assert_eq!(rx.measure(&leo(t), &c.epoch(t)), Err(GnssError::EpochMisaligned(t)));
    }

    #[test]
    fn no_fix_below_four() {
        let mut rx = Receiver::new("A", ReceiverConfig::default(), &mut RngRoot::new(1));
        assert_eq!(
            rx.pvt_solution(&leo(SimTime::ZERO), 3),
            Err(GnssError::NoFix { visible: 3 })
        );
        let mut quiet = Receiver::new("A", ReceiverConfig::noiseless(), &mut RngRoot::new(1));
        let s = leo(SimTime::ZERO);
        let p = quiet.pvt_solution(&s, 4).unwrap();
        assert_eq!(Vec3::from(p.position), s.position);
        assert_eq!(Vec3::from(p.velocity), s.velocity);
    }

    #[test]
    fn ambiguity_held_within_pass_and_redrawn_after() {
        let mut rx = Receiver::new("A", ReceiverConfig::default(), &mut RngRoot::new(5));
        let mut draws = Vec::new();
        for pass in 0..40 {
            rx.measure_fixed(3, SimTime::from_secs(pass * 10), 2e7, 90.0, true);
            let n = rx.ambiguity(3).unwrap();
            assert!((-5..=5).contains(&n));
            for k in 1..5 {
                rx.measure_fixed(3, SimTime::from_secs(pass * 10 + k), 2e7, 90.0, false);
                assert_eq!(rx.ambiguity(3), Some(n));
            }
            draws.push(n);
        }
        draws.sort();
        draws.dedup();
        assert!(draws.len() > 3, "ambiguity never redrawn: {draws:?}");
    }
}
