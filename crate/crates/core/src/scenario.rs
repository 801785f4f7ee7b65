//! Scenario configuration files.
//!
//! Scenarios are TOML documents with a `version` key; unknown keys anywhere
//! are rejected. See `scenarios/demo.toml` for an annotated example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{DelaySpec, LinkParams};
use crate::dynamics::{Ballistics, ForceModelConfig, KeplerElements};
use crate::fsw::DemoConfig;
use crate::gnss::ReceiverConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorKind {
    #[default]
    Rk4,
    Identity,
}

/// Keplerian elements with angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementsDeg {
    /// m
    pub a: f64,
    pub e: f64,
    pub i_deg: f64,
    pub raan_deg: f64,
    pub argp_deg: f64,
    pub mean_anomaly_deg: f64,
}

impl ElementsDeg {
    pub fn to_radians(&self) -> KeplerElements {
        KeplerElements {
            a: self.a,
            e: self.e,
            i: self.i_deg.to_radians(),
            raan: self.raan_deg.to_radians(),
            argp: self.argp_deg.to_radians(),
            mean_anomaly: self.mean_anomaly_deg.to_radians(),
        }
    }
}

/// Zero-mean Gaussian initial-state dispersion in the body's RTN frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dispersion {
    pub position_sigma_rtn_m: [f64; 3],
    pub velocity_sigma_rtn_mps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub name: String,
    pub elements: ElementsDeg,
    /// Position offset from the element-derived state, RTN, m.
    #[serde(default)]
    pub offset_rtn_m: [f64; 3],
    #[serde(default)]
    pub ballistics: Ballistics,
    #[serde(default)]
    pub dispersion: Dispersion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub name: String,
    /// Spacecraft the process flies on.
    #[serde(default)]
    pub body: Option<String>,
    /// Heap limit in bytes.
    #[serde(default = "default_heap_limit")]
    pub heap_limit: u64,
    /// Give the process a GNSS receiver (needs `body`).
    #[serde(default)]
    pub gnss: bool,
    /// Upper bound of the uniform delay added to crosslink and command deliveries, s.
    #[serde(default)]
    pub jitter_s: f64,
    #[serde(default)]
    pub software: DemoConfig,
}

fn default_heap_limit() -> u64 {
    50_000_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub from: String,
    pub to: String,
    /// Also create the reverse link with the same parameters.
    #[serde(default = "default_true")]
    pub bidirectional: bool,
    #[serde(default = "default_p_enter")]
    pub p_enter: f64,
    #[serde(default = "default_p_exit")]
    pub p_exit: f64,
    #[serde(default)]
    pub delay: DelaySpec,
}

fn default_p_enter() -> f64 {
    LinkParams::default().p_enter
}

fn default_p_exit() -> f64 {
    LinkParams::default().p_exit
}

impl LinkConfig {
    pub fn params(&self) -> LinkParams {
        LinkParams {
            p_enter: self.p_enter,
            p_exit: self.p_exit,
            delay: self.delay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnssConfig {
    /// Almanac file; the bundled 31-satellite almanac when absent. Relative
    /// paths are resolved against the scenario file.
    pub almanac: Option<PathBuf>,
    /// Per-axis RTN perturbation of satellite positions, m.
    pub rtn_sigma_m: f64,
    pub log_measurements: bool,
    pub receiver: ReceiverConfig,
}

impl Default for GnssConfig {
    fn default() -> Self {
        GnssConfig {
            almanac: None,
            rtn_sigma_m: 1.0,
            log_measurements: false,
            receiver: ReceiverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    pub t_s: f64,
    pub process: String,
    pub command: String,
}

/// Regular begin/end-observation commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationCycles {
    pub process: String,
    pub start_s: f64,
    pub period_s: f64,
    pub observe_s: f64,
    pub count: u32,
}

impl ObservationCycles {
    pub fn commands(&self) -> Vec<CommandConfig> {
        (0..self.count)
            .flat_map(|k| {
                let t0 = self.start_s + k as f64 * self.period_s;
                [(t0, "begin_observation"), (t0 + self.observe_s, "end_observation")]
            })
            .map(|(t_s, c)| CommandConfig {
                t_s,
                process: self.process.clone(),
                command: c.to_string(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Heap telemetry cadence, s; 0 disables.
    pub heap_sample_s: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { heap_sample_s: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestHooks {
    /// Writes wall-clock readings into telemetry. Breaks determinism on purpose.
    pub wall_clock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Label of the GPS-second-aligned instant that simulation time 0 stands for.
    #[serde(default)]
    pub epoch: String,
    pub duration_s: f64,
    /// Seed used when none is given on the command line.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub propagator: PropagatorKind,
    #[serde(default)]
    pub force_model: ForceModelConfig,
    #[serde(default)]
    pub bodies: Vec<BodyConfig>,
    #[serde(default)]
    pub processes: Vec<ProcessConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub gnss: Option<GnssConfig>,
    #[serde(default)]
    pub commands: Vec<CommandConfig>,
    #[serde(default)]
    pub observation_cycles: Option<ObservationCycles>,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub test_hooks: TestHooks,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a scenario file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(g) = cfg.gnss.as_mut() {
            if let Some(a) = g.almanac.as_mut() {
                if a.is_relative() {
                    *a = path.parent().unwrap_or(Path::new(".")).join(&*a);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCHEMA_VERSION {
            return invalid(format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                self.version
            ));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return invalid("duration_s must be a non-negative number");
        }
        if self.propagator == PropagatorKind::Rk4 {
            self.force_model
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let mut names = std::collections::BTreeSet::new();
        for b in &self.bodies {
            if !names.insert(b.name.as_str()) {
                return invalid(format!("duplicate body {:?}", b.name));
            }
            if !(b.elements.e >= 0.0 && b.elements.e < 1.0 && b.elements.a > 0.0) {
                return invalid(format!("body {:?}: need 0 <= e < 1 and a > 0", b.name));
            }
        }
        let mut procs = std::collections::BTreeSet::new();
        for p in &self.processes {
            if !procs.insert(p.name.as_str()) {
                return invalid(format!("duplicate process {:?}", p.name));
            }
            if let Some(body) = &p.body {
                if !names.contains(body.as_str()) {
                    return invalid(format!("process {:?} flies on unknown body {body:?}", p.name));
                }
            }
            if p.gnss && (p.body.is_none() || self.gnss.is_none()) {
                return invalid(format!(
                    "process {:?} has a receiver but no body or [gnss] section",
                    p.name
                ));
            }
            if !(p.jitter_s >= 0.0) {
                return invalid(format!("process {:?}: jitter_s must be >= 0", p.name));
            }
        }
        for l in &self.links {
            for end in [&l.from, &l.to] {
                if !procs.contains(end.as_str()) {
                    return invalid(format!("link endpoint {end:?} is not a process"));
                }
            }
            l.params().validate().map_err(ConfigError::Invalid)?;
        }
        if let Some(g) = &self.gnss {
            g.receiver.validate().map_err(ConfigError::Invalid)?;
        }
        for c in self.all_commands() {
            if !procs.contains(c.process.as_str()) {
                return invalid(format!("command for unknown process {:?}", c.process));
            }
            if !(c.t_s >= 0.0) {
                return invalid("command times must be >= 0");
            }
        }
        Ok(())
    }

    /// Explicit commands plus the expanded observation cycles.
    pub fn all_commands(&self) -> Vec<CommandConfig> {
        let mut all = self.commands.clone();
        if let Some(c) = &self.observation_cycles {
            all.extend(c.commands());
        }
        all
    }

    pub fn process_mut(&mut self, name: &str) -> Option<&mut ProcessConfig> {
        self.processes.iter_mut().find(|p| p.name == name)
    }
}

/// Scenario files shipped with the crate, by name.
pub mod bundled {
    pub const DEMO: &str = include_str!("../../../scenarios/demo.toml");
    pub const SYNC_SWEEP: &str = include_str!("../../../scenarios/sync_sweep.toml");
    pub const MEMORY: &str = include_str!("../../../scenarios/memory.toml");
    pub const TRANSFER_MC: &str = include_str!("../../../scenarios/transfer_mc.toml");
    pub const EMPTY: &str = include_str!("../../../scenarios/empty.toml");

    pub fn all() -> [(&'static str, &'static str); 5] {
        [
            ("demo", DEMO),
            ("sync_sweep", SYNC_SWEEP),
            ("memory", MEMORY),
            ("transfer_mc", TRANSFER_MC),
            ("empty", EMPTY),
        ]
    }
}
