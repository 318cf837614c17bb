//! Line-oriented connection driver plus the TCP listener and the WebSocket
//! bridge built on it.

use std::fmt::Display;
use std::net::SocketAddr;
use std::sync::Arc;

use futures::{Sink, SinkExt, Stream, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::{Error as WsError, Message};
use tokio_util::codec::{Framed, LinesCodec};
use tracing::{debug, warn};

use crate::hub::{Hub, HubError};
use crate::protocol::{decode_client, encode};

/// Longest accepted line. A HELLO or ACTION is a few hundred bytes.
pub const MAX_LINE: usize = 64 * 1024;

/// Serves one connection given as a stream of incoming lines and a sink of
/// outgoing lines. Returns when the peer closes its side or the first line is
/// not an acceptable HELLO.
pub async fn run_connection<S, E, K>(hub: Arc<Hub>, mut incoming: S, mut outgoing: K)
where
    S: Stream<Item = Result<String, E>> + Unpin,
    E: Display,
    K: Sink<String> + Unpin + Send + 'static,
{
    let first = loop {
        match incoming.next().await {
            Some(Ok(line)) if line.trim().is_empty() => continue,
            Some(Ok(line)) => break line,
            _ => return,
        }
    };
    let hello = decode_client(&first).map_err(|_| HubError::MalformedHello);
    let (mut session, mut inbox) = match hello.and_then(|h| hub.connect(&h)) {
        Ok(pair) => pair,
        Err(e) => {
            let _ = outgoing.send(encode(&e.to_message(Some("HELLO")))).await;
            let _ = outgoing.close().await;
            return;
        }
    };
    debug!(client = session.client_id(), role = %session.role(), "connected");

    let writer = tokio::spawn(async move {
        while let Some(line) = inbox.recv().await {
            if outgoing.feed(line.to_string()).await.is_err() {
                return;
            }
            while let Ok(more) = inbox.try_recv() {
                if outgoing.feed(more.to_string()).await.is_err() {
                    return;
                }
            }
            if outgoing.flush().await.is_err() {
                return;
            }
        }
        let _ = outgoing.close().await;
    });

    while let Some(line) = incoming.next().await {
        // Channel-backed streams never report exhaustion to the scheduler;
        // without this a busy connection can hold a worker indefinitely.
        tokio::task::consume_budget().await;
        let line = match line {
            Ok(line) => line,
            Err(e) => {
                debug!(client = session.client_id(), "read failed: {e}");
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match decode_client(&line) {
            Ok(message) => session.handle(message),
            Err(e) => session.reject_line(&e),
        }
    }
    debug!(client = session.client_id(), "disconnected");
    drop(session);
    // The writer ends once every sender of this inbox (session and room
    // membership) is gone.
    let _ = writer.await;
}

/// Accepts newline-delimited JSON over TCP until the listener fails.
pub async fn serve_tcp(listener: TcpListener, hub: Arc<Hub>) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let hub = hub.clone();
        tokio::spawn(async move {
            let _ = stream.set_nodelay(true);
            serve_tcp_stream(hub, stream, peer).await;
        });
    }
}

async fn serve_tcp_stream(hub: Arc<Hub>, stream: TcpStream, peer: SocketAddr) {
    debug!(%peer, "tcp accept");
    let framed = Framed::new(stream, LinesCodec::new_with_max_length(MAX_LINE));
    let (sink, stream) = framed.split();
    run_connection(hub, stream, sink).await;
}

/// Browser-facing bridge. Each text frame carries one or more protocol lines;
/// each outgoing frame carries exactly one message.
pub async fn serve_ws(listener: TcpListener, hub: Arc<Hub>) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let hub = hub.clone();
        tokio::spawn(async move {
            let _ = stream.set_nodelay(true);
            let ws = match tokio_tungstenite::accept_async(stream).await {
                Ok(ws) => ws,
                Err(e) => {
                    warn!(%peer, "websocket handshake failed: {e}");
                    return;
                }
            };
            let (sink, stream) = ws.split();
            let sink = sink.with(|line: String| async move { Ok::<_, WsError>(Message::text(line)) });
            let lines = stream
                .take_while(|frame| futures::future::ready(!matches!(frame, Ok(Message::Close(_)))))
                .flat_map(|frame| {
                    let parts: Vec<Result<String, WsError>> = match frame {
                        Ok(Message::Text(text)) => split_lines(text.as_str()),
                        Ok(Message::Binary(bytes)) => split_lines(&String::from_utf8_lossy(&bytes)),
                        Ok(_) => Vec::new(),
                        Err(e) => vec![Err(e)],
                    };
                    futures::stream::iter(parts)
                });
            run_connection(hub, Box::pin(lines), Box::pin(sink)).await;
        });
    }
}

fn split_lines(text: &str) -> Vec<Result<String, WsError>> {
    text.split('\n').map(|l| Ok(l.to_owned())).collect()
}
