//! Replay checks: the same `(config, seed)` must reproduce bit for bit.

use serde::{Deserialize, Serialize};

use crate::scenario::{ConfigError, ScenarioConfig};

use super::{simulate, RunOutcome};

/// First telemetry record where a replay departed from the first run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// Index of the replay that diverged; run 0 is the reference.
    pub run: usize,
    /// Zero-based telemetry line.
    pub line: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminismReport {
    pub seed: u64,
    pub passed: bool,
    pub fingerprints: Vec<String>,
    pub hashes: Vec<String>,
    pub divergence: Option<Divergence>,
}

fn first_divergence(run: usize, a: &RunOutcome, b: &RunOutcome) -> Option<Divergence> {
    let (ra, rb) = (a.telemetry.records(), b.telemetry.records());
    (0..ra.len().max(rb.len())).find_map(|i| {
        let expected = ra.get(i).map(|r| r.canonical_line());
        let actual = rb.get(i).map(|r| r.canonical_line());
        (expected != actual).then_some(Divergence {
            run,
            line: i,
            expected,
            actual,
        })
    })
}

/// Runs once per entry of `seeds`, which must all be the same seed, and compares the runs.
pub fn compare_runs(config: &ScenarioConfig, seeds: &[u64]) -> Result<DeterminismReport, ConfigError> {
    let Some(&seed) = seeds.first() else {
        return Err(ConfigError::Invalid(
            "a determinism check needs at least two runs".into(),
        ));
    };
    if seeds.len() < 2 {
        return Err(ConfigError::Invalid(
            "a determinism check needs at least two runs".into(),
        ));
    }
    if let Some(other) = seeds.iter().find(|&&s| s != seed) {
        return Err(ConfigError::Invalid(format!(
            "determinism check given different seeds ({seed} and {other}); replays must share one seed"
        )));
    }
    let runs: Vec<RunOutcome> = seeds.iter().map(|&s| simulate(config, s)).collect::<Result<_, _>>()?;
    let fingerprints: Vec<String> = runs.iter().map(|r| r.report.fingerprint.clone()).collect();
    let hashes: Vec<String> = runs.iter().map(|r| r.report.analysis_hash.clone()).collect();
    let passed = runs.iter().all(|r| r.report.same_outcome(&runs[0].report));
    let divergence = if passed {
        None
    } else {
        runs.iter()
            .enumerate()
            .skip(1)
            .find_map(|(k, r)| first_divergence(k, &runs[0], r))
    };
    Ok(DeterminismReport {
        seed,
        passed,
        fingerprints,
        hashes,
        divergence,
    })
}

/// Runs `(config, seed)` `n` times; passes iff fingerprints, hashes and metrics all agree.
pub fn check_determinism(config: &ScenarioConfig, seed: u64, n: usize) -> Result<DeterminismReport, ConfigError> {
    compare_runs(config, &vec![seed; n])
}
