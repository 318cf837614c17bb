//! Networked control plane for shared classroom state.
//!
//! [`hub`] sequences and fans out actions, [`transport`] puts it on TCP and
//! a WebSocket bridge, [`memory`] offers an in-process transport with
//! injected latency, and [`harness`] drives simulated classes against any of
//! them.

pub mod client;
pub mod commands;
pub mod config;
pub mod harness;
pub mod hub;
pub mod memory;
pub mod protocol;
pub mod report;
pub mod transport;

use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use veld_core::world::World;

pub use config::ServerConfig;
pub use hub::{Hub, HubConfig, HubError, Session};

/// A hub listening on TCP and on the WebSocket bridge. Dropping it stops
/// accepting connections.
#[derive(Debug)]
pub struct RunningServer {
    pub hub: Arc<Hub>,
    pub tcp_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningServer {
    /// Binds both listeners on `host` and starts serving `world`.
    pub async fn start(config: &ServerConfig, world: World, host: &str) -> std::io::Result<Self> {
        let hub = Hub::new(
            world,
            HubConfig {
                instructor_token: config.instructor_token.clone(),
                max_clients: config.max_clients,
                presence_rate: config.presence_rate,
            },
        );
        let tcp = TcpListener::bind((host, config.listen_port)).await?;
        let ws_port = if config.listen_port == 0 { 0 } else { config.ws_port() };
        let ws = TcpListener::bind((host, ws_port)).await?;
        let (tcp_addr, ws_addr) = (tcp.local_addr()?, ws.local_addr()?);
        let mut tasks = Vec::new();
        tasks.extend(hub.spawn_presence_ticker());
        let h = hub.clone();
        tasks.push(tokio::spawn(async move {
            if let Err(e) = transport::serve_tcp(tcp, h).await {
                tracing::error!("tcp listener stopped: {e}");
            }
        }));
        let h = hub.clone();
        tasks.push(tokio::spawn(async move {
            if let Err(e) = transport::serve_ws(ws, h).await {
                tracing::error!("websocket listener stopped: {e}");
            }
        }));
        Ok(Self { hub, tcp_addr, ws_addr, tasks })
    }

    /// Serves until the listeners fail.
    pub async fn wait(mut self) {
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}
