//! Monte Carlo sweeps over seeds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{ConfigError, ScenarioConfig};

use super::{run_scenario, FaultReport, RunReport};

const HISTOGRAM_BINS: usize = 20;

const SCALAR_METRICS: [&str; 6] = [
    "total_dv",
    "mean_nav_error",
    "max_nav_error",
    "events_executed",
    "propagations_performed",
    "dropped",
];

const BODY_METRICS: [&str; 1] = ["total_dv:"];
const PROCESS_METRICS: [&str; 2] = ["heap_transient:", "heap_resting:"];

/// Rejects metric names [`metric_value`] does not know.
pub fn validate_metric(name: &str) -> Result<(), ConfigError> {
    let known = SCALAR_METRICS.contains(&name)
        || BODY_METRICS
            .iter()
            .chain(&PROCESS_METRICS)
            .any(|p| name.strip_prefix(p).is_some_and(|rest| !rest.is_empty()));
    if known {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!(
            "unknown metric {name:?}; expected one of {SCALAR_METRICS:?} or total_dv:<body>, heap_transient:<process>, heap_resting:<process>"
        )))
    }
}

/// Reads one scalar metric out of a report. `None` when the run has no value for it.
pub fn metric_value(report: &RunReport, name: &str) -> Option<f64> {
    let m = &report.metrics;
    let nav = || m.nav_error.iter().map(|s| s.error);
    match name {
        "total_dv" => Some(m.total_dv.values().sum()),
        "mean_nav_error" => m.mean_nav_error,
        "max_nav_error" => nav().reduce(f64::max),
        "events_executed" => Some(m.events_executed as f64),
        "propagations_performed" => Some(m.propagations_performed as f64),
        "dropped" => Some(m.links.values().map(|l| l.dropped as f64).sum()),
        _ => {
            if let Some(body) = name.strip_prefix("total_dv:") {
                m.total_dv.get(body).copied()
            } else if let Some(p) = name.strip_prefix("heap_transient:") {
                m.heap_peaks.get(p).map(|h| h.transient as f64)
            } else if let Some(p) = name.strip_prefix("heap_resting:") {
                m.heap_peaks.get(p).map(|h| h.resting as f64)
            } else {
                None
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Option<Histogram> {
        let lo = values.iter().copied().reduce(f64::min)?;
        let hi = values.iter().copied().reduce(f64::max)?;
        if lo == hi {
            return Some(Histogram {
                edges: vec![lo, hi],
                counts: vec![values.len() as u64],
            });
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|k| if k == bins { hi } else { lo + width * k as f64 })
            .collect();
        let mut counts = vec![0; bins];
        for v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Some(Histogram { edges, counts })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub value: Option<f64>,
    pub fingerprint: String,
    pub fault: Option<FaultReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSummary {
    pub scenario: String,
    pub metric: String,
    pub results: Vec<SeedResult>,
    /// Runs that finished without a fault and produced the metric.
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 for a single run.
    pub std: Option<f64>,
    pub histogram: Option<Histogram>,
    /// Groups of distinct seeds that produced the same fingerprint.
    pub fingerprint_collisions: Vec<Vec<u64>>,
    #[serde(skip)]
    pub reports: Vec<RunReport>,
}

impl PartialEq for McSummary {
    /// Wall-clock timing of the individual runs is ignored.
    fn eq(&self, o: &Self) -> bool {
        self.scenario == o.scenario
            && self.metric == o.metric
            && self.results == o.results
            && self.n == o.n
            && self.mean == o.mean
            && self.std == o.std
            && self.histogram == o.histogram
            && self.fingerprint_collisions == o.fingerprint_collisions
            && self.reports.len() == o.reports.len()
            && self.reports.iter().zip(&o.reports).all(|(a, b)| a.same_outcome(b))
    }
}

impl McSummary {
    pub fn faults(&self) -> impl Iterator<Item = (u64, &FaultReport)> {
        self.results
            .iter()
            .filter_map(|r| r.fault.as_ref().map(|f| (r.seed, f)))
    }

    pub fn values(&self) -> Vec<f64> {
        self.results
            .iter()
            .filter(|r| r.fault.is_none())
            .filter_map(|r| r.value)
            .collect()
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

/// Runs every seed in isolation, in parallel, and aggregates `metric`.
///
/// Results are listed in the order of `seeds`. Faulted runs are recorded and
/// left out of the statistics.
pub fn monte_carlo(config: &ScenarioConfig, seeds: &[u64], metric: &str) -> Result<McSummary, ConfigError> {
    if seeds.is_empty() {
        return Err(ConfigError::Invalid("monte carlo needs at least one seed".into()));
    }
    validate_metric(metric)?;
    config.validate()?;
    let reports: Vec<RunReport> = seeds
        .par_iter()
        .map(|&s| run_scenario(config, s))
        .collect::<Result<_, _>>()?;

    let results: Vec<SeedResult> = reports
        .iter()
        .map(|r| SeedResult {
            seed: r.seed,
            value: metric_value(r, metric),
            fingerprint: r.fingerprint.clone(),
            fault: r.fault.clone(),
        })
        .collect();

    let mut by_fp: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for r in &results {
        let group = by_fp.entry(&r.fingerprint).or_default();
        if !group.contains(&r.seed) {
            group.push(r.seed);
        }
    }
    let fingerprint_collisions = by_fp.into_values().filter(|g| g.len() > 1).collect();

    let mut summary = McSummary {
        scenario: config.name.clone(),
        metric: metric.to_string(),
        results,
        n: 0,
        mean: None,
        std: None,
        histogram: None,
        fingerprint_collisions,
        reports,
    };
    let values = summary.values();
    summary.n = values.len();
    (summary.mean, summary.std) = mean_std(&values);
    summary.histogram = Histogram::new(&values, HISTOGRAM_BINS);
    Ok(summary)
}
