//! Canonical JSON encoding, state digests, and late-joiner snapshots.
//!
//! Canonical form: UTF-8, object keys in lexicographic byte order, no
//! whitespace. The digest is the lowercase hex SHA-256 of that text.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::action::DisplayBinding;
use crate::state::RoomState;

/// Encodes `value` canonically, independent of how its maps were built.
pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (key, val)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(key, out);
                out.push(':');
                write_canonical(val, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::String(s) => write_string(s, out),
        scalar => out.push_str(&scalar.to_string()),
    }
}

fn write_string(s: &str, out: &mut String) {
    out.push_str(&serde_json::to_string(s).expect("string encoding is infallible"));
}

/// Canonical encoding of the full room state, roster included. This is the
/// form carried in SNAPSHOT messages.
pub fn canonical_state(state: &RoomState) -> String {
    to_canonical_string(&state_value(state))
}

fn state_value(state: &RoomState) -> Value {
    serde_json::to_value(state).expect("room state always serializes")
}

/// Hex-encoded SHA-256 of a room's canonical replicated state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDigest(pub String);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Digest of everything the reducer controls. The occupant roster is
/// presence, not replicated state, and is excluded.
pub fn digest(state: &RoomState) -> StateDigest {
    let mut value = state_value(state);
    if let Value::Object(map) = &mut value {
        map.remove("occupants");
    }
    let text = to_canonical_string(&value);
    StateDigest(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Digest of the part of the room tracked by a display bound to `binding`.
pub fn view_digest(state: &RoomState, binding: &DisplayBinding) -> StateDigest {
    digest(&state.view(binding))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMessage {
    pub room: String,
    pub last_seq: u64,
    pub state: RoomState,
}

impl SnapshotMessage {
    /// The state a fresh client starts from.
    pub fn restore(&self) -> RoomState {
        self.state.clone()
    }
}

pub fn make_snapshot(state: &RoomState, last_seq: u64) -> SnapshotMessage {
    SnapshotMessage { room: state.room_id.clone(), last_seq, state: state.clone() }
}
