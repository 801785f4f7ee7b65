//! `sim`: run scenarios, Monte Carlo sweeps, and replay checks.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};

use spacesim::harness::{self, DeterminismReport, McSummary, RunReport};
use spacesim::scenario::{ConfigError, ScenarioConfig};

const EXIT_FAULT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_NONDETERMINISTIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sim",
    version,
    about = "Deterministic simulator for distributed spacecraft flight software"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write telemetry, a report, and CSV exports.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Defaults to the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a scenario once per seed and aggregate one metric.
    Mc {
        #[arg(long)]
        scenario: PathBuf,
        /// `A..B` (B excluded), `A..=B`, or a comma-separated list.
        #[arg(long)]
        seeds: String,
        /// total_dv, total_dv:<body>, mean_nav_error, max_nav_error, events_executed,
        /// propagations_performed, dropped, heap_transient:<process>, heap_resting:<process>
        #[arg(long, default_value = "total_dv")]
        metric: String,
        #[arg(long, default_value = "mc_out")]
        out: PathBuf,
    },
    /// Replay a scenario several times and verify every run is identical.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// Stamp wall-clock readings into telemetry, which must make the check fail.
        #[arg(long)]
        inject_wall_clock: bool,
    },
    /// Render SVG plots for the CSV files in a run or Monte Carlo directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

/// Parses `A..B`, `A..=B`, or `a,b,c`.
fn parse_seeds(s: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError::Invalid(format!("cannot parse seed list {s:?}"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(ConfigError::Invalid(format!("seed list {s:?} is empty")));
    }
    Ok(seeds)
}

fn print_run(r: &RunReport, out: &Path) {
    println!("scenario       {}", r.scenario);
    println!("seed           {}", r.seed);
    println!("fingerprint    {}", r.fingerprint);
    println!("analysis hash  {}", r.analysis_hash);
    println!("events         {}", r.metrics.events_executed);
    println!("propagations   {}", r.metrics.propagations_performed);
    for (body, dv) in &r.metrics.total_dv {
        println!("total dv       {body}: {dv:.6} m/s");
    }
    if let Some(e) = r.metrics.mean_nav_error {
        println!("mean nav error {e:.4} m ({} samples)", r.metrics.nav_error.len());
    }
    for (p, h) in &r.metrics.heap_peaks {
        println!(
            "heap           {p}: peak {} B, resting {} B, limit {} B",
            h.transient, h.resting, h.limit
        );
    }
    for (l, s) in &r.metrics.links {
        println!(
            "link           {l}: sent {}, dropped {}, delivered {}, reordered {}",
            s.sent, s.dropped, s.delivered, s.reordered
        );
    }
    print!("wall time      {:.3} s", r.timing.wall_seconds);
    match r.timing.speedup {
        Some(x) => println!(" ({x:.0}x real time)"),
        None => println!(),
    }
    println!("outputs        {}", out.display());
}

fn print_mc(mc: &McSummary, out: &Path) {
    println!("scenario   {}", mc.scenario);
    println!("metric     {}", mc.metric);
    println!("runs       {} ({} usable)", mc.results.len(), mc.n);
    if let (Some(m), Some(s)) = (mc.mean, mc.std) {
        println!("mean       {m:.6}");
        println!("std        {s:.6}");
    }
    for (seed, f) in mc.faults() {
        println!(
            "fault      seed {seed}: {} in {} at t={} s",
            f.kind,
            f.process.as_deref().unwrap_or("-"),
            f.time_s
        );
    }
    for g in &mc.fingerprint_collisions {
        println!("collision  seeds {g:?} share a fingerprint");
    }
    println!("outputs    {}", out.display());
}

fn print_check(r: &DeterminismReport) {
    for (k, (fp, h)) in r.fingerprints.iter().zip(&r.hashes).enumerate() {
        println!("run {k}: fingerprint {fp} hash {h}");
    }
    if r.passed {
        println!("deterministic: {} identical runs", r.fingerprints.len());
    } else {
        println!("NOT deterministic");
        if let Some(d) = &r.divergence {
            println!("first divergence: run {} telemetry line {}", d.run, d.line);
            println!("  expected {}", d.expected.as_deref().unwrap_or("<end of telemetry>"));
            println!("  actual   {}", d.actual.as_deref().unwrap_or("<end of telemetry>"));
        }
    }
}

enum Failure {
    Config(ConfigError),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn execute(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run { scenario, seed, out } => {
            let config = ScenarioConfig::load(&scenario)?;
            let seed = seed.unwrap_or(config.seed);
            let run = harness::simulate(&config, seed)?;
            harness::write_run_outputs(&out, &run).with_context(|| format!("writing {}", out.display()))?;
            print_run(&run.report, &out);
            if let Some(f) = &run.report.fault {
                eprintln!(
                    "fault: {} in {} at t={} s: {}",
                    f.kind,
                    f.process.as_deref().unwrap_or("harness"),
                    f.time_s,
                    f.message
                );
                return Ok(EXIT_FAULT);
            }
            Ok(0)
        }
        Command::Mc {
            scenario,
            seeds,
            metric,
            out,
        } => {
            let config = ScenarioConfig::load(&scenario)?;
            let seeds = parse_seeds(&seeds)?;
            let mc = harness::monte_carlo(&config, &seeds, &metric)?;
            harness::write_mc_outputs(&out, &mc).with_context(|| format!("writing {}", out.display()))?;
            print_mc(&mc, &out);
            Ok(0)
        }
        Command::Check {
            scenario,
            seed,
            runs,
            inject_wall_clock,
        } => {
            let mut config = ScenarioConfig::load(&scenario)?;
            config.test_hooks.wall_clock |= inject_wall_clock;
            let seed = seed.unwrap_or(config.seed);
            let report = harness::check_determinism(&config, seed, runs)?;
            print_check(&report);
            Ok(if report.passed { 0 } else { EXIT_NONDETERMINISTIC })
        }
        Command::Plot { input } => {
            let written = plot::plot_dir(&input)?;
            if written.is_empty() {
                return Err(ConfigError::Invalid(format!("no plottable CSV files in {}", input.display())).into());
            }
            for p in written {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
