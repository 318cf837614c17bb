//! Newline-delimited JSON wire protocol.
//!
//! Every message is one JSON object on one line, discriminated by its `"t"`
//! field. The same text is carried unchanged over TCP, the WebSocket bridge
//! and the in-memory transport. Unknown fields are ignored so peers can
//! attach their own bookkeeping.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use veld_core::{ActionEnvelope, Role, RoomState, SnapshotMessage, Vec3};

/// Messages a client may send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "UPPERCASE")]
pub enum ClientMessage {
    Hello {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
        name: String,
    },
    Join {
        room: String,
        binding: String,
    },
    Leave,
    Action {
        room: String,
        app: String,
        kind: String,
        #[serde(default)]
        payload: Map<String, Value>,
        #[serde(default)]
        cts: i64,
    },
    Pos {
        x: f64,
        y: f64,
        z: f64,
    },
    /// Direct teleport to a lesson by name.
    Teleport {
        room: String,
    },
    /// Step through portal `portal` (its index in the current lesson).
    Portal {
        portal: usize,
    },
}

impl ClientMessage {
    /// The `"t"` tag, echoed back in `ERROR.re` so a client can tell which of
    /// its requests failed.
    pub fn tag(&self) -> &'static str {
        match self {
            ClientMessage::Hello { .. } => "HELLO",
            ClientMessage::Join { .. } => "JOIN",
            ClientMessage::Leave => "LEAVE",
            ClientMessage::Action { .. } => "ACTION",
            ClientMessage::Pos { .. } => "POS",
            ClientMessage::Teleport { .. } => "TELEPORT",
            ClientMessage::Portal { .. } => "PORTAL",
        }
    }

    pub fn action(action: &ActionEnvelope) -> Self {
        ClientMessage::Action {
            room: action.room_id.clone(),
            app: action.app_id.clone(),
            kind: action.kind.clone(),
            payload: action.payload.clone(),
            cts: action.client_ts,
        }
    }

    pub fn pos(p: Vec3) -> Self {
        ClientMessage::Pos { x: p.x, y: p.y, z: p.z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresenceKind {
    Join,
    Leave,
    Pos,
}

/// Messages the server sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "UPPERCASE")]
pub enum ServerMessage {
    Welcome {
        client_id: String,
        role: Role,
    },
    Snapshot {
        room: String,
        last_seq: u64,
        state: RoomState,
    },
    Event {
        seq: u64,
        room: String,
        app: String,
        kind: String,
        payload: Map<String, Value>,
        actor: String,
    },
    Ack {
        seq: u64,
    },
    Presence {
        kind: PresenceKind,
        client_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<Role>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<f64>,
    },
    Error {
        code: String,
        detail: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        re: Option<String>,
    },
}

impl ServerMessage {
    pub fn event(action: &ActionEnvelope) -> Self {
        ServerMessage::Event {
            seq: action.seq.expect("only sequenced actions are broadcast"),
            room: action.room_id.clone(),
            app: action.app_id.clone(),
            kind: action.kind.clone(),
            payload: action.payload.clone(),
            actor: action.actor_id.clone(),
        }
    }

    pub fn snapshot(snapshot: SnapshotMessage) -> Self {
        ServerMessage::Snapshot { room: snapshot.room, last_seq: snapshot.last_seq, state: snapshot.state }
    }

    pub fn error(code: impl Into<String>, detail: impl Into<String>, re: Option<&str>) -> Self {
        ServerMessage::Error { code: code.into(), detail: detail.into(), re: re.map(str::to_string) }
    }

    pub fn presence_pos(client_id: &str, p: Vec3) -> Self {
        ServerMessage::Presence {
            kind: PresenceKind::Pos,
            client_id: client_id.to_string(),
            name: None,
            role: None,
            x: Some(p.x),
            y: Some(p.y),
            z: Some(p.z),
        }
    }

    /// The envelope carried by an EVENT, as a replica applies it.
    pub fn as_action(&self) -> Option<ActionEnvelope> {
        match self {
            ServerMessage::Event { seq, room, app, kind, payload, actor } => {
                Some(ActionEnvelope::new(room, app, actor, kind, payload.clone()).with_seq(*seq))
            }
            _ => None,
        }
    }

    /// The position carried by a PRESENCE message, if complete.
    pub fn position(&self) -> Option<Vec3> {
        match self {
            ServerMessage::Presence { x: Some(x), y: Some(y), z: Some(z), .. } => Some(Vec3::new(*x, *y, *z)),
            _ => None,
        }
    }

    pub fn as_snapshot(&self) -> Option<SnapshotMessage> {
        match self {
            ServerMessage::Snapshot { room, last_seq, state } => {
                Some(SnapshotMessage { room: room.clone(), last_seq: *last_seq, state: state.clone() })
            }
            _ => None,
        }
    }
}

/// One message as a single line without the trailing newline.
pub fn encode<T: Serialize>(message: &T) -> String {
    serde_json::to_string(message).expect("protocol messages always serialize")
}

pub fn decode_client(line: &str) -> Result<ClientMessage, serde_json::Error> {
    serde_json::from_str(line.trim())
}

pub fn decode_server(line: &str) -> Result<ServerMessage, serde_json::Error> {
    serde_json::from_str(line.trim())
}
