//! Scenario runner: builds a simulation from a [`ScenarioConfig`], runs it,
//! and condenses the result into a [`RunReport`].
//!
//! Every random draw in a run comes from one [`RngRoot`] seeded with the run
//! seed, so a report is a pure function of `(config, seed)` apart from its
//! [`Timing`] block.

mod check;
mod mc;
mod output;

use std::collections::BTreeMap;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::comms::LinkStats;
use crate::dynamics::{rtn_basis, BodyId, BodyState, Continuum, IdentityPropagator, Propagator, Rk4Propagator};
use crate::fault::Fault;
use crate::fsw::DemoSoftware;
use crate::gnss::{Constellation, Receiver};
use crate::host::{ProcessId, SpawnError};
use crate::kernel::{Kernel, KernelError};
use crate::rng::RngRoot;
use crate::scenario::{BodyConfig, ConfigError, PropagatorKind, ScenarioConfig};
use crate::telemetry::TelemetryLog;
use crate::time::SimTime;
use crate::world::{schedule_command, start_gnss, FlightWorld, GnssSystem};

pub use check::{check_determinism, compare_runs, DeterminismReport, Divergence};
pub use mc::{metric_value, monte_carlo, validate_metric, Histogram, McSummary, SeedResult};
pub use output::{write_mc_outputs, write_run_outputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub process: Option<String>,
    pub time_ns: i64,
    pub time_s: f64,
    /// Fault class, e.g. `InvalidTransition`.
    pub kind: String,
    pub message: String,
}

impl FaultReport {
    pub fn from_fault(f: &Fault) -> Self {
        FaultReport {
            process: f.process.clone(),
            time_ns: f.time.as_nanos(),
            time_s: f.time.as_secs_f64(),
            kind: f.reason.kind().to_string(),
            message: f.reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavSample {
    pub t_s: f64,
    pub process: String,
    /// Norm of the relative-position estimate error, m.
    pub error: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HeapPeak {
    /// Bytes still allocated at the end of the run.
    pub resting: u64,
    /// Highest allocated bytes seen inside any handler.
    pub transient: u64,
    pub extent: u64,
    pub limit: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Accumulated impulse magnitude per body, m/s.
    pub total_dv: BTreeMap<String, f64>,
    pub nav_error: Vec<NavSample>,
    pub mean_nav_error: Option<f64>,
    pub heap_peaks: BTreeMap<String, HeapPeak>,
    /// Keyed `src->dst`.
    pub links: BTreeMap<String, LinkStats>,
    pub events_executed: u64,
    pub propagations_performed: u64,
    /// Every mission mode each process entered, in order.
    pub mission_modes: BTreeMap<String, Vec<String>>,
}

/// Wall-clock figures. These vary between runs and are kept out of every
/// determinism comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Time spent inside the event loop only.
    pub wall_seconds: f64,
    /// Simulated seconds per wall second.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub fingerprint: String,
    pub analysis_hash: String,
    pub sim_seconds: f64,
    pub metrics: Metrics,
    pub fault: Option<FaultReport>,
    /// Words drawn from each random stream.
    pub rng_usage: BTreeMap<String, u64>,
    pub timing: Timing,
}

impl RunReport {
    /// Equal in everything except wall-clock timing.
    pub fn same_outcome(&self, other: &RunReport) -> bool {
        let mut a = self.clone();
        a.timing = other.timing;
        a == *other
    }
}

/// A finished run: the report plus the telemetry it was computed from.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub telemetry: TelemetryLog,
}

/// A simulation assembled from a scenario and ready to run.
pub struct Simulation {
    pub kernel: Kernel<FlightWorld>,
    pub rng: RngRoot,
    pub end: SimTime,
    scenario: String,
    bodies: Vec<(String, BodyId)>,
    setup_fault: Option<Fault>,
}

/// Initial ECI state of a body: elements, then the RTN offset, then the seeded dispersion.
fn initial_state(b: &BodyConfig, mu: f64, rng: &mut RngRoot) -> BodyState {
    let (mut r, mut v) = b.elements.to_radians().to_cartesian(mu);
    let (er, et, en) = rtn_basis(&r, &v);
    let rtn = |x: [f64; 3]| er * x[0] + et * x[1] + en * x[2];
    r += rtn(b.offset_rtn_m);
    let d = &b.dispersion;
    if d.position_sigma_rtn_m
        .iter()
        .chain(&d.velocity_sigma_rtn_mps)
        .any(|s| *s != 0.0)
    {
        let mut s = rng.stream(&format!("dispersion:{}", b.name));
        let mut draw = |sig: [f64; 3]| {
            sig.map(|sg| {
                let z: f64 = StandardNormal.sample(&mut s);
                sg * z
            })
        };
        let dr = draw(d.position_sigma_rtn_m);
        let dv = draw(d.velocity_sigma_rtn_mps);
        r += rtn(dr);
        v += rtn(dv);
    }
    BodyState {
        body: BodyId(0),
        epoch: SimTime::ZERO,
        position: r,
        velocity: v,
        ballistics: b.ballistics,
    }
}

impl Simulation {
    pub fn build(config: &ScenarioConfig, seed: u64) -> Result<Simulation, ConfigError> {
        config.validate()?;
        let mut rng = RngRoot::new(seed);
        let end = SimTime::from_secs_f64(config.duration_s);

        let mut world = FlightWorld::new();
        world.inject_wall_clock = config.test_hooks.wall_clock;
        if config.outputs.heap_sample_s > 0.0 {
            world.heap_sample_interval = Some(SimTime::from_secs_f64(config.outputs.heap_sample_s));
        }

        let mut bodies = Vec::new();
        let continuum = if config.bodies.is_empty() {
            None
        } else {
            let prop: Box<dyn Propagator> = match config.propagator {
                PropagatorKind::Rk4 => {
                    Box::new(Rk4Propagator::new(config.force_model).map_err(|e| ConfigError::Invalid(e.to_string()))?)
                }
                PropagatorKind::Identity => Box::new(IdentityPropagator::default()),
            };
            let mut c = Continuum::new(prop);
            for b in &config.bodies {
                let state = initial_state(b, config.force_model.mu, &mut rng);
                bodies.push((b.name.clone(), c.add_body(&b.name, state)));
            }
            Some(c)
        };
        let body_id = |name: &str| bodies.iter().find(|(n, _)| n == name).map(|(_, id)| *id);

        if let Some(g) = &config.gnss {
            let constellation = match &g.almanac {
                None => Constellation::builtin(seed, g.rtn_sigma_m),
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    let sats = Constellation::parse_almanac(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    Constellation::new(sats, seed, g.rtn_sigma_m)
                }
            };
            world.gnss = Some(GnssSystem {
                constellation,
                receivers: BTreeMap::new(),
                log_measurements: g.log_measurements,
            });
        }

        let mut setup_fault = None;
        let mut ids: BTreeMap<&str, ProcessId> = BTreeMap::new();
        for p in &config.processes {
            let def = DemoSoftware::def(&p.name, p.heap_limit, p.software.clone());
            let id = match world.host.spawn(&def, SimTime::ZERO) {
                Ok(id) => id,
                Err(SpawnError::Fault(f)) => {
                    setup_fault = Some(f);
                    break;
                }
                Err(e @ SpawnError::DuplicateName(_)) => return Err(ConfigError::Invalid(e.to_string())),
            };
            ids.insert(&p.name, id);
            if let Some(b) = p.body.as_deref().and_then(body_id) {
                world.bindings.insert(id, b);
            }
            if p.jitter_s > 0.0 {
                world
                    .jitter
                    .insert(id, (p.jitter_s, rng.stream(&format!("jitter:{}", p.name))));
            }
            if p.gnss {
                if let (Some(g), Some(sys)) = (&config.gnss, world.gnss.as_mut()) {
                    sys.receivers
                        .insert(id, Receiver::new(&p.name, g.receiver.clone(), &mut rng));
                }
            }
        }

        for l in &config.links {
            world.comms.add_link(&mut rng, &l.from, &l.to, l.params());
            if l.bidirectional {
                world.comms.add_link(&mut rng, &l.to, &l.from, l.params());
            }
        }

        let has_receivers = world.gnss.as_ref().is_some_and(|g| !g.receivers.is_empty());
        let mut kernel = match continuum {
            Some(c) => Kernel::with_continuum(world, c),
            None => Kernel::new(world),
        };
        if setup_fault.is_none() {
            let schedule_err = |e: KernelError| ConfigError::Invalid(e.to_string());
            for c in config.all_commands() {
                let id = ids[c.process.as_str()];
                schedule_command(&mut kernel, id, SimTime::from_secs_f64(c.t_s), c.command).map_err(schedule_err)?;
            }
            if has_receivers {
                start_gnss(&mut kernel, SimTime::ZERO, end).map_err(schedule_err)?;
            }
        }

        Ok(Simulation {
            kernel,
            rng,
            end,
            scenario: config.name.clone(),
            bodies,
            setup_fault,
        })
    }

    /// Runs to the end of the scenario, or to the first fault.
    pub fn run(mut self) -> RunOutcome {
        let started = Instant::now();
        let fault = match self.setup_fault.take() {
            Some(f) => Some(f),
            None => match self.kernel.run_until(self.end) {
                Ok(_) => None,
                Err(KernelError::FaultRaised(f)) => Some(f),
                Err(e @ KernelError::PastTime { .. }) => {
                    Some(Fault::new(crate::fault::FaultReason::Other(e.to_string())))
                }
            },
        };
        let wall_seconds = started.elapsed().as_secs_f64();
        let sim_seconds = match &fault {
            Some(f) => f.time.as_secs_f64(),
            None => self.end.as_secs_f64(),
        };

        let mut total_dv = BTreeMap::new();
        if let Some(c) = self.kernel.continuum() {
            for (name, id) in &self.bodies {
                total_dv.insert(name.clone(), c.total_dv(*id));
            }
        }
        let events_executed = self.kernel.events_executed();
        let propagations_performed = self.kernel.propagations_performed();
        let now = self.kernel.now();
        let mut world = self.kernel.into_world();

        let mut links = BTreeMap::new();
        for l in world.comms.links() {
            links.insert(format!("{}->{}", l.src, l.dst), l.stats());
        }
        for (name, s) in &links {
            let payload = serde_json::to_value(s).unwrap_or(Value::Null);
            world
                .telemetry
                .push(now, "harness", "link_stats", json!({"link": name, "stats": payload}));
        }
        let mut heap_peaks = BTreeMap::new();
        for p in world.host.processes() {
            let h = world.host.heap(p.id);
            heap_peaks.insert(
                p.name.clone(),
                HeapPeak {
                    resting: h.allocated_bytes(),
                    transient: p.max_transient,
                    extent: h.extent(),
                    limit: h.limit(),
                },
            );
        }
        let fault_report = fault.as_ref().map(FaultReport::from_fault);
        if let Some(f) = &fault_report {
            let payload = serde_json::to_value(f).unwrap_or(Value::Null);
            world
                .telemetry
                .push(now, f.process.as_deref().unwrap_or("harness"), "fault", payload);
        }

        let mut mission_modes: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in world.telemetry.records() {
            if r.kind == "mission_mode" {
                if let Some(m) = r.payload.as_str() {
                    mission_modes.entry(r.source.clone()).or_default().push(m.to_string());
                }
            }
        }
        let nav_error: Vec<NavSample> = world
            .nav_errors
            .iter()
            .map(|e| NavSample {
                t_s: e.t.as_secs_f64(),
                process: e.process.clone(),
                error: e.error,
            })
            .collect();
        let mean_nav_error =
            (!nav_error.is_empty()).then(|| nav_error.iter().map(|s| s.error).sum::<f64>() / nav_error.len() as f64);

        let report = RunReport {
            scenario: self.scenario,
            seed: self.rng.seed(),
            fingerprint: self.rng.fingerprint(),
            analysis_hash: world.telemetry.hash(),
            sim_seconds,
            metrics: Metrics {
                total_dv,
                nav_error,
                mean_nav_error,
                heap_peaks,
                links,
                events_executed,
                propagations_performed,
                mission_modes,
            },
            fault: fault_report,
            rng_usage: self.rng.usage(),
            timing: Timing {
                wall_seconds,
                speedup: (wall_seconds > 0.0).then(|| sim_seconds / wall_seconds),
            },
        };
        RunOutcome {
            report,
            telemetry: world.telemetry,
        }
    }
}

/// Builds and runs one scenario.
pub fn simulate(config: &ScenarioConfig, seed: u64) -> Result<RunOutcome, ConfigError> {
    Ok(Simulation::build(config, seed)?.run())
}

pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<RunReport, ConfigError> {
    Ok(simulate(config, seed)?.report)
}
