//! Files written by `sim run` and `sim mc`.
//!
//! A run directory holds `telemetry.jsonl`, `report.json`, and CSV exports of
//! the time series (`nav_error.csv`, `heap.csv`, `links.csv`). A Monte Carlo
//! directory holds `mc_summary.json`, `mc_values.csv`, and `histogram.csv`.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::{McSummary, RunOutcome};

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

#[derive(Serialize)]
struct HeapRow<'a> {
    t_s: f64,
    process: &'a str,
    resting: u64,
    transient: u64,
    extent: u64,
}

#[derive(Serialize)]
struct LinkRow<'a> {
    link: &'a str,
    sent: u64,
    dropped: u64,
    delivered: u64,
    reordered: u64,
}

pub fn write_run_outputs(dir: &Path, run: &RunOutcome) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("telemetry.jsonl"), run.telemetry.to_jsonl())?;
    write_json(&dir.join("report.json"), &run.report)?;
    write_csv(&dir.join("nav_error.csv"), &run.report.metrics.nav_error)?;
    let heap = run.telemetry.records().iter().filter(|r| r.kind == "heap").map(|r| {
        let field = |k: &str| r.payload.get(k).and_then(serde_json::Value::as_u64).unwrap_or(0);
        HeapRow {
            t_s: r.t.as_secs_f64(),
            process: &r.source,
            resting: field("resting"),
            transient: field("transient"),
            extent: field("extent"),
        }
    });
    write_csv(&dir.join("heap.csv"), heap)?;
    let links = run.report.metrics.links.iter().map(|(link, s)| LinkRow {
        link,
        sent: s.sent,
        dropped: s.dropped,
        delivered: s.delivered,
        reordered: s.reordered,
    });
    write_csv(&dir.join("links.csv"), links)
}

#[derive(Serialize)]
struct ValueRow<'a> {
    seed: u64,
    value: Option<f64>,
    fingerprint: &'a str,
    fault: Option<&'a str>,
}

#[derive(Serialize)]
struct BinRow {
    lower: f64,
    upper: f64,
    count: u64,
}

pub fn write_mc_outputs(dir: &Path, mc: &McSummary) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("mc_summary.json"), mc)?;
    let values = mc.results.iter().map(|r| ValueRow {
        seed: r.seed,
        value: r.value,
        fingerprint: &r.fingerprint,
        fault: r.fault.as_ref().map(|f| f.kind.as_str()),
    });
    write_csv(&dir.join("mc_values.csv"), values)?;
    let bins = mc.histogram.iter().flat_map(|h| {
        h.counts.iter().enumerate().map(|(k, &count)| BinRow {
            lower: h.edges[k],
            upper: h.edges[k + 1],
            count,
        })
    });
    write_csv(&dir.join("histogram.csv"), bins)
}
