//! A minimal protocol client over TCP or the in-memory transport.

use std::sync::Arc;
use std::time::Duration;

use futures::channel::mpsc::{unbounded, UnboundedReceiver, UnboundedSender};
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::{TcpStream, ToSocketAddrs};
use tokio_util::codec::{Framed, LinesCodec};
use veld_core::{Role, SnapshotMessage};

use crate::hub::Hub;
use crate::memory::{self, NetModel};
use crate::protocol::{decode_server, encode, ClientMessage, ServerMessage};
use crate::transport::MAX_LINE;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connect failed: {0}")]
    Connect(#[from] std::io::Error),
    #[error("connection closed")]
    Closed,
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("undecodable server line {line:?}: {reason}")]
    Decode { line: String, reason: String },
    #[error("server refused: {code}: {detail}")]
    Refused { code: String, detail: String },
    #[error("unexpected reply: {0:?}")]
    Unexpected(Box<ServerMessage>),
}

#[derive(Debug)]
pub struct Client {
    out: UnboundedSender<String>,
    inbox: UnboundedReceiver<String>,
}

impl Client {
    pub fn from_lines((out, inbox): (UnboundedSender<String>, UnboundedReceiver<String>)) -> Self {
        Self { out, inbox }
    }

    pub fn memory(hub: &Arc<Hub>, model: NetModel, link: u64) -> Self {
        Self::from_lines(memory::connect(hub, model, link))
    }

    pub async fn tcp(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (mut sink, mut lines) = Framed::new(stream, LinesCodec::new_with_max_length(MAX_LINE)).split();
        let (out, mut outgoing) = unbounded::<String>();
        let (incoming, inbox) = unbounded::<String>();
        tokio::spawn(async move {
            while let Some(line) = outgoing.next().await {
                if sink.send(line).await.is_err() {
                    break;
                }
            }
            let _ = sink.close().await;
        });
        tokio::spawn(async move {
            while let Some(Ok(line)) = lines.next().await {
                if incoming.unbounded_send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { out, inbox })
    }

    pub fn send(&self, message: &ClientMessage) -> Result<(), ClientError> {
        self.send_raw(encode(message))
    }

    pub fn send_raw(&self, line: impl Into<String>) -> Result<(), ClientError> {
        self.out.unbounded_send(line.into()).map_err(|_| ClientError::Closed)
    }

    /// A sender that can be moved to another task.
    pub fn sender(&self) -> UnboundedSender<String> {
        self.out.clone()
    }

    pub async fn recv(&mut self) -> Result<ServerMessage, ClientError> {
        let line = self.inbox.next().await.ok_or(ClientError::Closed)?;
        decode_server(&line).map_err(|e| ClientError::Decode { line, reason: e.to_string() })
    }

    pub async fn recv_timeout(&mut self, limit: Duration) -> Result<ServerMessage, ClientError> {
        tokio::time::timeout(limit, self.recv()).await.map_err(|_| ClientError::Timeout(limit))?
    }

    /// Skips messages until one satisfies `wanted`.
    pub async fn recv_until(
        &mut self,
        limit: Duration,
        mut wanted: impl FnMut(&ServerMessage) -> bool,
    ) -> Result<ServerMessage, ClientError> {
        let deadline = tokio::time::Instant::now() + limit;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            let message = self.recv_timeout(left).await.map_err(|e| match e {
                ClientError::Timeout(_) => ClientError::Timeout(limit),
                other => other,
            })?;
            if wanted(&message) {
                return Ok(message);
            }
        }
    }

    /// Sends HELLO and waits for WELCOME.
    pub async fn hello(&mut self, name: &str, token: Option<&str>) -> Result<(String, Role), ClientError> {
        self.send(&ClientMessage::Hello { token: token.map(str::to_string), name: name.to_string() })?;
        match self.recv_timeout(REPLY_TIMEOUT).await? {
            ServerMessage::Welcome { client_id, role } => Ok((client_id, role)),
            ServerMessage::Error { code, detail, .. } => Err(ClientError::Refused { code, detail }),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }

    /// Sends JOIN and waits for the snapshot, skipping unrelated traffic.
    pub async fn join(&mut self, room: &str, binding: &str) -> Result<SnapshotMessage, ClientError> {
        self.send(&ClientMessage::Join { room: room.to_string(), binding: binding.to_string() })?;
        let reply = self
            .recv_until(REPLY_TIMEOUT, |m| {
                matches!(m, ServerMessage::Snapshot { .. })
                    || matches!(m, ServerMessage::Error { re: Some(re), .. } if re == "JOIN")
            })
            .await?;
        match reply {
            ServerMessage::Error { code, detail, .. } => Err(ClientError::Refused { code, detail }),
            snapshot => Ok(snapshot.as_snapshot().expect("matched a snapshot")),
        }
    }

    /// Closes the sending side, which the server treats as a disconnect.
    pub fn close(&mut self) {
        self.out.close_channel();
    }
}

/// How long the request/reply helpers wait.
pub const REPLY_TIMEOUT: Duration = Duration::from_secs(10);
