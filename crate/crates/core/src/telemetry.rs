//! Canonical JSON-lines telemetry.
//!
//! Every record serializes to one line with keys sorted at every depth and
//! floats in shortest round-trip form, so parsing a log and writing it back
//! reproduces it byte for byte and its hash is stable.

use std::fmt::Write as _;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: SimTime,
    pub source: String,
    pub kind: String,
    pub payload: Value,
}

impl TelemetryRecord {
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("kind".into(), Value::from(self.kind.as_str()));
        m.insert("payload".into(), self.payload.clone());
        m.insert("source".into(), Value::from(self.source.as_str()));
        m.insert("t".into(), Value::from(self.t.as_nanos()));
        Value::Object(m)
    }

    pub fn canonical_line(&self) -> String {
        canonical_json(&self.to_value())
    }

    pub fn from_value(v: &Value) -> Option<TelemetryRecord> {
        Some(TelemetryRecord {
            t: SimTime::from_nanos(v.get("t")?.as_i64()?),
            source: v.get("source")?.as_str()?.to_string(),
            kind: v.get("kind")?.as_str()?.to_string(),
            payload: v.get("payload")?.clone(),
        })
    }
}

/// Serializes with object keys sorted, independent of how the map was built.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&m[k], out);
            }
            out.push('}');
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(x, out);
            }
            out.push(']');
        }
        scalar => {
            let _ = write!(out, "{scalar}");
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TelemetryLog {
    records: Vec<TelemetryRecord>,
}

impl TelemetryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: SimTime, source: &str, kind: &str, payload: Value) {
        self.records.push(TelemetryRecord {
            t,
            source: source.to_string(),
            kind: kind.to_string(),
            payload,
        });
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The whole log, one canonical record per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.canonical_line());
            s.push('\n');
        }
        s
    }

    /// SHA-256 of [`to_jsonl`](Self::to_jsonl), lowercase hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(r.canonical_line().as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

pub fn hash_jsonl(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a JSON-lines log and writes it back canonically.
pub fn recanonicalize(text: &str) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let v: Value = serde_json::from_str(line)?;
        out.push_str(&canonical_json(&v));
        out.push('\n');
    }
    Ok(out)
}
