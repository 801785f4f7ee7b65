//! Crosslink payloads exchanged by the demo flight software.
//!
//! Every payload is a JSON object carrying a schema version `v` and a `type`:
//!
//! | type          | fields                                              |
//! |---------------|-----------------------------------------------------|
//! | `sync`        | `seq` (u64), `kind` (`begin` or `end`)              |
//! | `ack`         | `seq` (u64)                                         |
//! | `measurement` | `epoch` (GPS second), `position`, `velocity` (3×f64) |

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncKind {
    Begin,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Sync {
        seq: u64,
        kind: SyncKind,
    },
    Ack {
        seq: u64,
    },
    Measurement {
        epoch: i64,
        position: [f64; 3],
        velocity: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Envelope {
    v: u32,
    #[serde(flatten)]
    msg: Message,
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(&Envelope {
            v: SCHEMA_VERSION,
            msg: self.clone(),
        })
        .expect("message serializes")
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, String> {
        let env: Envelope = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        if env.v != SCHEMA_VERSION {
            return Err(format!("unsupported schema version {}", env.v));
        }
        Ok(env.msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        let m = Message::Sync {
            seq: 3,
            kind: SyncKind::Begin,
        };
        let text = String::from_utf8(m.encode()).unwrap();
        assert_eq!(text, r#"{"v":1,"type":"sync","seq":3,"kind":"begin"}"#);
        assert_eq!(Message::decode(text.as_bytes()).unwrap(), m);
    }

    #[test]
    fn round_trips() {
        for m in [
            Message::Ack { seq: 9 },
            Message::Measurement {
                epoch: 120,
                position: [7e6, -1.5, 0.25],
                velocity: [0.0, 7500.0, 1e-3],
            },
        ] {
            assert_eq!(Message::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn rejects_other_versions() {
        assert!(Message::decode(br#"{"v":2,"type":"ack","seq":1}"#).is_err());
        assert!(Message::decode(b"not json").is_err());
    }
}
