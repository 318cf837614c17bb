#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Map, Value};
use veld::client::{Client, ClientError};
use veld::hub::{Hub, HubConfig};
use veld::memory::NetModel;
use veld::protocol::{ClientMessage, ServerMessage};
use veld_core::world::{load_world, World};

pub const TOKEN: &str = "teach";

pub const WORLD: &str = r#"{
  "lessons": [
    {
      "name": "hall",
      "bounds": {"min": [-20, 0, -20], "max": [20, 5, 20]},
      "spawn": [0, 0, 0],
      "apps": ["slides", "faceoff"],
      "central": "slides",
      "pods": [
        {"pod_id": "p1", "center": [0, 0, 0], "radius": 1.0},
        {"pod_id": "p2", "center": [-5, 0, 3], "radius": 2.0}
      ],
      "portals": [{"position": [10, 0, 0], "target": "annex"}]
    },
    {
      "name": "annex",
      "bounds": {"min": [-10, 0, -10], "max": [10, 5, 10]},
      "spawn": [1, 0, 1],
      "apps": ["faceoff"],
      "central": "faceoff",
      "portals": [{"position": [0, 0, -8], "target": "hall"}]
    }
  ]
}"#;

pub fn world() -> World {
    load_world(WORLD).unwrap()
}

/// A hub that forwards positions immediately, so tests see them in order.
pub fn hub(max_clients: usize) -> Arc<Hub> {
    let mut cfg = HubConfig::new(TOKEN);
    cfg.max_clients = max_clients;
    cfg.presence_rate = 0.0;
    Hub::new(world(), cfg)
}

pub async fn connect(hub: &Arc<Hub>, name: &str, instructor: bool) -> (Client, String) {
    let mut c = Client::memory(hub, NetModel::default(), 0);
    let (id, _) = c.hello(name, instructor.then_some(TOKEN)).await.unwrap();
    (c, id)
}

pub async fn joined(hub: &Arc<Hub>, name: &str, instructor: bool) -> (Client, String) {
    let (mut c, id) = connect(hub, name, instructor).await;
    c.join("hall", "slides").await.unwrap();
    (c, id)
}

pub fn action(room: &str, app: &str, kind: &str, payload: Value) -> ClientMessage {
    let payload: Map<String, Value> = payload.as_object().cloned().unwrap_or_default();
    ClientMessage::Action { room: room.into(), app: app.into(), kind: kind.into(), payload, cts: 0 }
}

pub fn select_deck(len: u32) -> ClientMessage {
    action("hall", "slides", "SELECT_DECK", json!({"deck_id": "d", "deck_length": len}))
}

/// Everything that arrives until the line goes quiet for `quiet`.
pub async fn drain_for(c: &mut Client, quiet: Duration) -> Vec<ServerMessage> {
    let mut out = Vec::new();
    loop {
        match c.recv_timeout(quiet).await {
            Ok(m) => out.push(m),
            Err(ClientError::Timeout(_)) | Err(ClientError::Closed) => return out,
            Err(e) => panic!("{e}"),
        }
    }
}

pub async fn drain(c: &mut Client) -> Vec<ServerMessage> {
    drain_for(c, Duration::from_millis(80)).await
}

pub async fn expect_ack(c: &mut Client) -> u64 {
    match c
        .recv_until(Duration::from_secs(5), |m| matches!(m, ServerMessage::Ack { .. } | ServerMessage::Error { .. }))
        .await
        .unwrap()
    {
        ServerMessage::Ack { seq } => seq,
        other => panic!("expected ACK, got {other:?}"),
    }
}

pub async fn expect_error(c: &mut Client) -> (String, Option<String>) {
    match c
        .recv_until(Duration::from_secs(5), |m| matches!(m, ServerMessage::Ack { .. } | ServerMessage::Error { .. }))
        .await
        .unwrap()
    {
        ServerMessage::Error { code, re, .. } => (code, re),
        other => panic!("expected ERROR, got {other:?}"),
    }
}

pub fn events(messages: &[ServerMessage]) -> Vec<&ServerMessage> {
    messages.iter().filter(|m| matches!(m, ServerMessage::Event { .. })).collect()
}
