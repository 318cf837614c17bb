//! In-process transport with injected one-way latency, for deterministic
//! load runs without sockets.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use futures::channel::mpsc::{unbounded, UnboundedReceiver, UnboundedSender};
use futures::StreamExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::time::Instant;

use crate::hub::Hub;
use crate::transport::run_connection;

/// One-way delay of every message: `base_latency_ms` plus a uniform draw
/// from `[0, jitter_ms]`. Links stay FIFO, so jitter never reorders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetModel {
    pub base_latency_ms: f64,
    pub jitter_ms: f64,
    pub seed: u64,
}

impl Default for NetModel {
    fn default() -> Self {
        Self { base_latency_ms: 0.0, jitter_ms: 0.0, seed: 0 }
    }
}

impl NetModel {
    pub fn is_valid(&self) -> bool {
        self.base_latency_ms >= 0.0
            && self.jitter_ms >= 0.0
            && self.base_latency_ms.is_finite()
            && self.jitter_ms.is_finite()
    }

    fn is_instant(&self) -> bool {
        self.base_latency_ms == 0.0 && self.jitter_ms == 0.0
    }

    /// Independent, reproducible randomness for one direction of one link.
    fn rng(&self, link: u64, direction: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(link.wrapping_mul(2).wrapping_add(direction));
        rng
    }
}

/// The client end of an in-memory connection: the lines it sends and the
/// lines it receives.
pub type LinePair = (UnboundedSender<String>, UnboundedReceiver<String>);

/// A FIFO pipe that holds each line for its sampled delay.
fn delayed_pipe(model: NetModel, mut rng: ChaCha8Rng) -> LinePair {
    let (tx_in, mut rx_in) = unbounded::<String>();
    if model.is_instant() {
        return (tx_in, rx_in);
    }
    // Stamping runs apart from the delaying loop so a line's delay counts
    // from when it was sent, not from when the previous line was released.
    let (tx_stamped, mut rx_stamped) = unbounded::<(Instant, String)>();
    let (tx_out, rx_out) = unbounded::<String>();
    tokio::spawn(async move {
        let mut last = Instant::now();
        while let Some(line) = rx_in.next().await {
            tokio::task::consume_budget().await;
            let jitter = if model.jitter_ms > 0.0 { rng.random_range(0.0..=model.jitter_ms) } else { 0.0 };
            let delay = Duration::from_secs_f64((model.base_latency_ms + jitter) / 1000.0);
            let deliver_at = (Instant::now() + delay).max(last);
            last = deliver_at;
            if tx_stamped.unbounded_send((deliver_at, line)).is_err() {
                break;
            }
        }
    });
    tokio::spawn(async move {
        while let Some((deliver_at, line)) = rx_stamped.next().await {
            tokio::time::sleep_until(deliver_at).await;
            if tx_out.unbounded_send(line).is_err() {
                break;
            }
        }
    });
    (tx_in, rx_out)
}

/// Opens connection number `link` to `hub`. Dropping the returned sender
/// closes the connection as an abrupt disconnect would.
pub fn connect(hub: &Arc<Hub>, model: NetModel, link: u64) -> LinePair {
    let (up_tx, up_rx) = delayed_pipe(model, model.rng(link, 0));
    let (down_tx, down_rx) = delayed_pipe(model, model.rng(link, 1));
    let hub = hub.clone();
    tokio::spawn(async move {
        run_connection(hub, up_rx.map(Ok::<String, Infallible>), down_tx).await;
    });
    (up_tx, down_rx)
}
