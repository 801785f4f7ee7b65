//! Keplerian and quasi-nonsingular relative orbital elements.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{BodyState, DynamicsError, Vec3};

/// Osculating Keplerian elements. Angles in radians, `a` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeplerElements {
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Solves Kepler's equation `M = E - e sin E` by Newton iteration.
pub fn eccentric_anomaly(mean_anomaly: f64, e: f64) -> f64 {
    let m = wrap_pi(mean_anomaly);
    let mut ecc = if e < 0.8 { m } else { PI.copysign(m) };
    for _ in 0..50 {
        let f = ecc - e * ecc.sin() - m;
        let d = f / (1.0 - e * ecc.cos());
        ecc -= d;
        if d.abs() < 1e-15 {
            break;
        }
    }
    ecc
}

/// Unit vectors of the radial / transverse / normal frame.
pub fn rtn_basis(position: &Vec3, velocity: &Vec3) -> (Vec3, Vec3, Vec3) {
    let r_hat = position.normalize();
    let n_hat = position.cross(velocity).normalize();
    let t_hat = n_hat.cross(&r_hat);
    (r_hat, t_hat, n_hat)
}

impl KeplerElements {
    pub fn to_cartesian(&self, mu: f64) -> (Vec3, Vec3) {
        let ecc = eccentric_anomaly(self.mean_anomaly, self.e);
        let (se, ce) = ecc.sin_cos();
        let b = (1.0 - self.e * self.e).sqrt();
        let r = self.a * (1.0 - self.e * ce);
        let p_pf = Vec3::new(self.a * (ce - self.e), self.a * b * se, 0.0);
        let v_pf = Vec3::new(-se, b * ce, 0.0) * ((mu * self.a).sqrt() / r);
        let rot = self.perifocal_to_inertial();
        (rot * p_pf, rot * v_pf)
    }

    fn perifocal_to_inertial(&self) -> nalgebra::Matrix3<f64> {
        let (so, co) = self.raan.sin_cos();
        let (sw, cw) = self.argp.sin_cos();
        let (si, ci) = self.i.sin_cos();
        nalgebra::Matrix3::new(
            co * cw - so * sw * ci,
            -co * sw - so * cw * ci,
            so * si,
            so * cw + co * sw * ci,
            -so * sw + co * cw * ci,
            -co * si,
            sw * si,
            cw * si,
            ci,
        )
    }

    pub fn from_cartesian(position: &Vec3, velocity: &Vec3, mu: f64) -> KeplerElements {
        let n = NodalElements::from_cartesian(position, velocity, mu);
        let e = n.ex.hypot(n.ey);
        let argp = if e > 0.0 { n.ey.atan2(n.ex) } else { 0.0 };
        KeplerElements {
            a: n.a,
            e,
            i: n.i,
            raan: n.raan,
            argp,
            mean_anomaly: wrap_pi(n.mean_arg_lat - argp),
        }
    }
}

/// Elements expressed relative to the ascending node, well defined for circular orbits.
struct NodalElements {
    a: f64,
    /// e cos(argp)
    ex: f64,
    /// e sin(argp)
    ey: f64,
    i: f64,
    raan: f64,
    /// argp + mean anomaly
    mean_arg_lat: f64,
}

impl NodalElements {
    fn from_cartesian(r: &Vec3, v: &Vec3, mu: f64) -> NodalElements {
        let rn = r.norm();
        let h = r.cross(v);
        let h_hat = h.normalize();
        let node = Vec3::z().cross(&h);
        let node_hat = if node.norm() > 1e-12 * h.norm() {
            node.normalize()
        } else {
            Vec3::x()
        };
        let m_hat = h_hat.cross(&node_hat);
        let e_vec = (r * (v.norm_squared() - mu / rn) - v * r.dot(v)) / mu;
        let a = 1.0 / (2.0 / rn - v.norm_squared() / mu);
        let ex = e_vec.dot(&node_hat);
        let ey = e_vec.dot(&m_hat);
        let e = ex.hypot(ey);
        let argp = if e > 0.0 { ey.atan2(ex) } else { 0.0 };
        let arg_lat = r.dot(&m_hat).atan2(r.dot(&node_hat));
        let nu = arg_lat - argp;
        let ecc = ((1.0 - e * e).max(0.0).sqrt() * nu.sin()).atan2(e + nu.cos());
        let mean = ecc - e * ecc.sin();
        NodalElements {
            a,
            ex,
            ey,
            i: h_hat.z.clamp(-1.0, 1.0).acos(),
            raan: node_hat.y.atan2(node_hat.x),
            mean_arg_lat: argp + mean,
        }
    }

    fn eccentricity(&self) -> f64 {
        self.ex.hypot(self.ey)
    }
}

/// Quasi-nonsingular relative orbital elements of a deputy with respect to a chief.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeElements {
    pub da: f64,
    pub dlambda: f64,
    pub dex: f64,
    pub dey: f64,
    pub dix: f64,
    pub diy: f64,
}

impl RelativeElements {
    pub fn as_array(&self) -> [f64; 6] {
        [self.da, self.dlambda, self.dex, self.dey, self.dix, self.diy]
    }
}

pub fn relative_elements(chief: &BodyState, deputy: &BodyState, mu: f64) -> Result<RelativeElements, DynamicsError> {
    if chief.epoch != deputy.epoch {
        return Err(DynamicsError::EpochMismatch {
            chief: chief.epoch,
            deputy: deputy.epoch,
        });
    }
    let c = NodalElements::from_cartesian(&chief.position, &chief.velocity, mu);
    if !(c.eccentricity() < 1.0) || c.a <= 0.0 {
        return Err(DynamicsError::HyperbolicChief(c.eccentricity()));
    }
    let d = NodalElements::from_cartesian(&deputy.position, &deputy.velocity, mu);
    let draan = wrap_pi(d.raan - c.raan);
    Ok(RelativeElements {
        da: (d.a - c.a) / c.a,
        dlambda: wrap_pi(d.mean_arg_lat - c.mean_arg_lat) + draan * c.i.cos(),
        dex: d.ex - c.ex,
        dey: d.ey - c.ey,
        dix: d.i - c.i,
        diy: draan * c.i.sin(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Ballistics, BodyId, EARTH_MU};
    use crate::time::SimTime;

    fn state(el: &KeplerElements) -> BodyState {
        let (position, velocity) = el.to_cartesian(EARTH_MU);
        BodyState {
            body: BodyId(0),
            epoch: SimTime::ZERO,
            position,
            velocity,
            ballistics: Ballistics::default(),
        }
    }

    const CHIEF: KeplerElements = KeplerElements {
        a: 6_878_000.0,
        e: 0.002,
        i: 1.7,
        raan: 0.4,
        argp: 2.0,
        mean_anomaly: -0.6,
    };

    #[test]
    fn cartesian_round_trip() {
        let (r, v) = CHIEF.to_cartesian(EARTH_MU);
        let back = KeplerElements::from_cartesian(&r, &v, EARTH_MU);
        assert!((back.a - CHIEF.a).abs() < 1e-6);
        assert!((back.e - CHIEF.e).abs() < 1e-12);
        assert!((back.i - CHIEF.i).abs() < 1e-12);
        assert!((back.raan - CHIEF.raan).abs() < 1e-12);
        assert!(wrap_pi(back.argp + back.mean_anomaly - CHIEF.argp - CHIEF.mean_anomaly).abs() < 1e-10);
    }

    #[test]
    fn identical_states_give_zero() {
        let s = state(&CHIEF);
        let roe = relative_elements(&s, &s, EARTH_MU).unwrap();
        assert_eq!(roe, RelativeElements::default());
    }

    #[test]
    fn semi_major_axis_offset() {
        let c = state(&CHIEF);
        let d = state(&KeplerElements {
            a: CHIEF.a * (1.0 + 1e-6),
            ..CHIEF
        });
        let roe = relative_elements(&c, &d, EARTH_MU).unwrap();
        assert!((roe.da - 1e-6).abs() < 1e-12);
        for x in [roe.dlambda, roe.dex, roe.dey, roe.dix, roe.diy] {
            assert!(x.abs() < 1e-11, "{roe:?}");
        }
    }

    #[test]
    fn epoch_mismatch_and_hyperbolic_chief() {
        let c = state(&CHIEF);
        let mut d = c.clone();
        d.epoch = SimTime::from_secs(1);
        assert!(matches!(
            relative_elements(&c, &d, EARTH_MU),
            Err(DynamicsError::EpochMismatch { .. })
        ));
        let mut hyp = c.clone();
        hyp.velocity *= 1.5;
        assert!(matches!(
            relative_elements(&hyp, &c, EARTH_MU),
            Err(DynamicsError::HyperbolicChief(_))
        ));
    }

    #[test]
    fn kepler_solver_converges() {
        for &e in &[0.0, 0.1, 0.5, 0.9] {
            for k in 0..20 {
                let m = -PI + k as f64 * 0.3;
                let ecc = eccentric_anomaly(m, e);
                assert!(wrap_pi(ecc - e * ecc.sin() - m).abs() < 1e-12);
            }
        }
    }
}
