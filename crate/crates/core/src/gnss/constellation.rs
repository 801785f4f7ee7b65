use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{rtn_basis, KeplerElements, Vec3, EARTH_J2, EARTH_MU, EARTH_RADIUS};
use crate::rng::derived_rng;
use crate::time::SimTime;

use super::GnssError;

/// The bundled 31-satellite almanac.
pub const BUILTIN_ALMANAC: &str = include_str!("almanac.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct GnssSatellite {
    pub prn: u8,
    /// Elements at the scenario epoch.
    pub elements: KeplerElements,
    /// rad/s
    pub raan_rate: f64,
    /// rad/s
    pub argp_rate: f64,
    /// Mean motion including the J2 correction, rad/s.
    pub mean_anomaly_rate: f64,
}

impl GnssSatellite {
    pub fn new(prn: u8, elements: KeplerElements) -> Self {
        let KeplerElements { a, e, i, .. } = elements;
        let n = (EARTH_MU / (a * a * a)).sqrt();
        let p = a * (1.0 - e * e);
        let k = EARTH_J2 * (EARTH_RADIUS / p).powi(2) * n;
        let ci = i.cos();
        GnssSatellite {
            prn,
            elements,
            raan_rate: -1.5 * k * ci,
            argp_rate: 0.75 * k * (5.0 * ci * ci - 1.0),
            mean_anomaly_rate: n + 0.75 * k * (1.0 - e * e).sqrt() * (3.0 * ci * ci - 1.0),
        }
    }

    /// Elements after `dt` seconds of secular drift.
    pub fn elements_at(&self, dt: f64) -> KeplerElements {
        KeplerElements {
            raan: self.elements.raan + self.raan_rate * dt,
            argp: self.elements.argp + self.argp_rate * dt,
            mean_anomaly: self.elements.mean_anomaly + self.mean_anomaly_rate * dt,
            ..self.elements
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteState {
    pub prn: u8,
    /// Closed-form position, used for visibility.
    pub nominal: Vec3,
    /// Nominal position plus the per-epoch RTN perturbation, used for ranging.
    pub position: Vec3,
}

/// All satellite positions at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationEpoch {
    pub t: SimTime,
    pub satellites: Vec<SatelliteState>,
}

#[derive(Debug, Clone)]
pub struct Constellation {
    satellites: Vec<GnssSatellite>,
    seed: u64,
    rtn_sigma: f64,
}

impl Constellation {
    pub fn new(satellites: Vec<GnssSatellite>, seed: u64, rtn_sigma: f64) -> Self {
        Constellation {
            satellites,
            seed,
            rtn_sigma,
        }
    }

    pub fn builtin(seed: u64, rtn_sigma: f64) -> Self {
        Self::new(
            Self::parse_almanac(BUILTIN_ALMANAC).expect("bundled almanac parses"),
            seed,
            rtn_sigma,
        )
    }

    /// Parses the almanac text format (see the bundled file for the schema).
    pub fn parse_almanac(text: &str) -> Result<Vec<GnssSatellite>, GnssError> {
        let mut out = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| GnssError::Almanac { line: idx + 1, reason };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", fields.len())));
            }
            let prn: u8 = fields[0].parse().map_err(|_| err(format!("bad prn {:?}", fields[0])))?;
            let mut vals = [0.0; 6];
            for (v, f) in vals.iter_mut().zip(&fields[1..]) {
                *v = f.parse().map_err(|_| err(format!("bad number {f:?}")))?;
            }
            let [a, e, i, raan, argp, m] = vals;
            if !(0.0..0.1).contains(&e) {
                return Err(err(format!("eccentricity {e} outside [0, 0.1)")));
            }
            if out.iter().any(|s: &GnssSatellite| s.prn == prn) {
                return Err(err(format!("duplicate prn {prn}")));
            }
            out.push(GnssSatellite::new(
                prn,
                KeplerElements {
                    a,
                    e,
                    i: i.to_radians(),
                    raan: raan.to_radians(),
                    argp: argp.to_radians(),
                    mean_anomaly: m.to_radians(),
                },
            ));
        }
        Ok(out)
    }

    pub fn satellites(&self) -> &[GnssSatellite] {
        &self.satellites
    }

    /// Draws the RTN perturbation of one satellite for one whole second; replayable in isolation.
    pub fn perturbation_rtn(&self, prn: u8, second: i64) -> Vec3 {
        if self.rtn_sigma == 0.0 {
            return Vec3::zeros();
        }
        let mut rng = derived_rng(self.seed, &format!("gnss:rtn:prn{prn:02}:{second}"));
        let mut draw = || -> f64 { rng.sample::<f64, _>(StandardNormal) * self.rtn_sigma };
        Vec3::new(draw(), draw(), draw())
    }

    pub fn epoch(&self, t: SimTime) -> ConstellationEpoch {
        let dt = t.as_secs_f64();
        let second = t.whole_secs();
        let satellites = self
            .satellites
            .iter()
            .map(|sat| {
                let (r, v) = sat.elements_at(dt).to_cartesian(EARTH_MU);
                let d = self.perturbation_rtn(sat.prn, second);
                let (rh, th, nh) = rtn_basis(&r, &v);
                SatelliteState {
                    prn: sat.prn,
                    nominal: r,
                    position: r + rh * d.x + th * d.y + nh * d.z,
                }
            })
            .collect();
        ConstellationEpoch { t, satellites }
    }

    /// Perturbed positions of every satellite at `t`.
    pub fn constellation_states(&self, t: SimTime) -> Vec<Vec3> {
        self.epoch(t).satellites.into_iter().map(|s| s.position).collect()
    }
}
