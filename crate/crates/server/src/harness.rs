//! Simulated classroom load: many protocol clients in one room, a few of them
//! instructors issuing actions, everyone streaming positions.
//!
//! A run has four phases. Clients connect and join (instructors first, one
//! at a time, so their ids are stable). The load phase has instructors send
//! their share of the actions while every client applies what it receives
//! to its own replica. Quiescence is reached when every action was answered,
//! every client has seen the last seq, and no message has moved for a quiet
//! window. Last, the clients disconnect, an observer joins to read the
//! server's digest, and metrics are aggregated.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures::channel::mpsc::{unbounded, UnboundedReceiver, UnboundedSender};
use futures::StreamExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;
use tokio::sync::watch;
use tokio::time::Instant;
use veld_core::action::{APP_FACEOFF, APP_GROUPS, APP_PODS, APP_SLIDES};
use veld_core::replica::Replica;
use veld_core::world::{load_world, World};
use veld_core::{digest, ActionEnvelope, DisplayBinding, Role, StateDigest, Vec3};

use crate::client::{Client, ClientError};
use crate::hub::Hub;
use crate::memory::NetModel;
use crate::protocol::{encode, ClientMessage, PresenceKind, ServerMessage};
use crate::report::{verify_convergence, Convergence, LatencySummary, MetricsReport};

/// Extra time beyond `duration_s` before a run is declared stuck.
pub const GRACE: Duration = Duration::from_secs(30);

/// Slides in the deck every run selects first.
const DECK_LENGTH: u32 = 24;

/// A single-lesson world for self-contained runs.
pub const BENCH_WORLD: &str = r#"{
  "lessons": [{
    "name": "bench-hall",
    "bounds": {"min": [-50, 0, -50], "max": [50, 10, 50]},
    "spawn": [0, 0, 0],
    "apps": ["slides", "faceoff"],
    "central": "slides",
    "pods": [
      {"pod_id": "p1", "center": [-6, 0, 4], "radius": 1.0},
      {"pod_id": "p2", "center": [0, 0, 4], "radius": 1.0},
      {"pod_id": "p3", "center": [6, 0, 4], "radius": 1.0}
    ]
  }]
}"#;

pub fn bench_world() -> World {
    load_world(BENCH_WORLD).expect("bundled bench world is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_clients: usize,
    pub n_instructors: usize,
    /// Total actions across all instructors.
    pub action_count: usize,
    /// Actions per second across all instructors; 0 sends as fast as possible.
    pub action_rate: f64,
    /// Position updates per second per client; 0 sends none.
    pub presence_rate: f64,
    /// Expected run length. The run fails after `duration_s + GRACE`.
    pub duration_s: f64,
    pub net_model: NetModel,
    pub room: String,
    pub binding: String,
    pub instructor_token: String,
}

impl ScenarioConfig {
    pub const MAX_CLIENTS: usize = 150;

    pub fn new(n_clients: usize, action_count: usize) -> Self {
        Self {
            n_clients,
            n_instructors: 1,
            action_count,
            action_rate: 0.0,
            presence_rate: 0.0,
            duration_s: 60.0,
            net_model: NetModel::default(),
            room: "bench-hall".into(),
            binding: APP_SLIDES.into(),
            instructor_token: "bench-token".into(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if !(1..=Self::MAX_CLIENTS).contains(&self.n_clients) {
            return bad("n_clients must be in 1..=150");
        }
        if self.n_instructors < 1 || self.n_instructors > self.n_clients {
            return bad("n_instructors must be in 1..=n_clients");
        }
        for (name, rate) in
            [("action_rate", self.action_rate), ("presence_rate", self.presence_rate), ("duration_s", self.duration_s)]
        {
            if !(rate >= 0.0 && rate.is_finite()) {
                return bad(&format!("{name} must be a finite value >= 0"));
            }
        }
        if !self.net_model.is_valid() {
            return bad("latency and jitter must be finite and >= 0");
        }
        if self.binding != APP_SLIDES && self.binding != APP_FACEOFF {
            return bad("binding must be a display app (slides or faceoff)");
        }
        Ok(())
    }

    fn deadline(&self, start: Instant) -> Instant {
        start + Duration::from_secs_f64(self.duration_s) + GRACE
    }

    /// No traffic for this long counts as quiet.
    fn quiet_window(&self) -> Duration {
        let ms = 2.0 * (self.net_model.base_latency_ms + self.net_model.jitter_ms);
        Duration::from_secs_f64(ms / 1000.0).max(Duration::from_millis(50))
    }
}

#[derive(Debug, Clone)]
pub enum Endpoint {
    /// A running server's TCP address, `host:port`.
    Tcp(String),
    /// A hub in this process, reached through the in-memory transport with
    /// the scenario's net model.
    InMemory(Arc<Hub>),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("client {client}: {source}")]
    Connect { client: String, source: ClientError },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
}

async fn open(endpoint: &Endpoint, net: NetModel, link: u64) -> Result<Client, ClientError> {
    match endpoint {
        Endpoint::Tcp(addr) => Client::tcp(addr.as_str()).await,
        Endpoint::InMemory(hub) => Ok(Client::memory(hub, net, link)),
    }
}

struct Joined {
    client: Client,
    client_id: String,
    replica: Replica,
}

async fn connect_one(cfg: &ScenarioConfig, endpoint: &Endpoint, index: usize) -> Result<Joined, HarnessError> {
    let name = format!("sim-{index}");
    let wrap = |source| HarnessError::Connect { client: name.clone(), source };
    let mut client = open(endpoint, cfg.net_model, index as u64).await.map_err(wrap)?;
    let token = (index < cfg.n_instructors).then_some(cfg.instructor_token.as_str());
    let (client_id, role) = client.hello(&name, token).await.map_err(wrap)?;
    if token.is_some() && role != Role::Instructor {
        return Err(wrap(ClientError::Refused {
            code: "Unauthorized".into(),
            detail: "instructor token rejected".into(),
        }));
    }
    let snapshot = client.join(&cfg.room, &cfg.binding).await.map_err(wrap)?;
    let replica = Replica::from_snapshot(&snapshot, DisplayBinding::new(&cfg.binding));
    Ok(Joined { client, client_id, replica })
}

/// Shared counters the coordinator polls while clients run.
#[derive(Default)]
struct Progress {
    responses: AtomicU64,
    top_ack: AtomicU64,
    received: AtomicU64,
}

#[derive(Debug, Default)]
struct ClientOutcome {
    client_id: String,
    digest: Option<StateDigest>,
    max_gap: u64,
    events: u64,
    acks: u64,
    rejects: u64,
    presence: u64,
    received: u64,
    protocol_errors: u64,
    /// (seq, when the EVENT was applied here)
    applied: Vec<(u64, Instant)>,
    /// Per own action in send order: the acked seq, or `None` if rejected.
    responses: Vec<Option<u64>>,
}

/// Receives and applies until told to stop.
async fn receive_loop(
    mut joined: Joined,
    mut submissions: UnboundedReceiver<ActionEnvelope>,
    progress: Arc<Progress>,
    last_seq: Arc<AtomicU64>,
    mut stop: watch::Receiver<bool>,
) -> ClientOutcome {
    let mut out = ClientOutcome { client_id: joined.client_id.clone(), ..Default::default() };
    last_seq.store(joined.replica.last_seq(), Ordering::SeqCst);
    loop {
        tokio::task::consume_budget().await;
        let message = tokio::select! {
            m = joined.client.recv() => m,
            _ = stop.changed() => break,
        };
        let message = match message {
            Ok(m) => m,
            Err(ClientError::Closed) => break,
            Err(_) => {
                out.protocol_errors += 1;
                continue;
            }
        };
        out.received += 1;
        progress.received.fetch_add(1, Ordering::Relaxed);
        match &message {
            ServerMessage::Event { .. } => {
                let action = message.as_action().expect("event carries an action");
                out.events += 1;
                match joined.replica.on_event(&action) {
                    Ok(_) => out.applied.push((action.seq.unwrap_or(0), Instant::now())),
                    Err(_) => out.protocol_errors += 1,
                }
                last_seq.store(joined.replica.last_seq(), Ordering::SeqCst);
            }
            ServerMessage::Ack { seq } => {
                while let Ok(a) = submissions.try_recv() {
                    joined.replica.submit(a);
                }
                out.acks += 1;
                out.responses.push(Some(*seq));
                if joined.replica.on_ack(*seq).is_err() {
                    out.protocol_errors += 1;
                }
                last_seq.store(joined.replica.last_seq(), Ordering::SeqCst);
                progress.top_ack.fetch_max(*seq, Ordering::SeqCst);
                progress.responses.fetch_add(1, Ordering::SeqCst);
            }
            ServerMessage::Error { re: Some(re), .. } if re == "ACTION" => {
                while let Ok(a) = submissions.try_recv() {
                    joined.replica.submit(a);
                }
                out.rejects += 1;
                out.responses.push(None);
                if joined.replica.on_reject().is_err() {
                    out.protocol_errors += 1;
                }
                progress.responses.fetch_add(1, Ordering::SeqCst);
            }
            ServerMessage::Presence { kind, client_id, .. } => match kind {
                PresenceKind::Join => joined.replica.on_join(client_id),
                PresenceKind::Leave => joined.replica.on_leave(client_id),
                PresenceKind::Pos => out.presence += 1,
            },
            _ => out.protocol_errors += 1,
        }
    }
    out.max_gap = joined.replica.max_gap();
    out.digest = Some(joined.replica.digest());
    out
}

/// What instructors draw their actions from. Every choice is legal in any
/// state the mix can reach once a deck is selected, so concurrent
/// instructors never get rejections.
struct ActionMix {
    room: String,
    binding: String,
    targets: Vec<String>,
    pods: Vec<String>,
}

impl ActionMix {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (&'static str, &'static str, Value) {
        let pick = |rng: &mut ChaCha8Rng, v: &[String]| v[rng.random_range(0..v.len())].clone();
        let roll = rng.random_range(0..100);
        let display = if self.binding == APP_SLIDES {
            match roll {
                0..=29 => Some((APP_SLIDES, "NEXT_SLIDE", json!({}))),
                30..=44 => Some((APP_SLIDES, "PREV_SLIDE", json!({}))),
                45..=59 => Some((APP_SLIDES, "GOTO_SLIDE", json!({ "index": rng.random_range(0..DECK_LENGTH) }))),
                60..=64 => Some((
                    APP_SLIDES,
                    "SELECT_DECK",
                    json!({"deck_id": format!("deck-{}", rng.random_range(0..4)), "deck_length": DECK_LENGTH}),
                )),
                _ => None,
            }
        } else {
            match roll {
                0..=49 => {
                    Some((APP_FACEOFF, "NEXT_PROMPT", json!({"prompt_id": format!("q{}", rng.random_range(0..50))})))
                }
                50..=64 => Some((APP_FACEOFF, "RESET", json!({}))),
                _ => None,
            }
        };
        if let Some(choice) = display {
            return choice;
        }
        match roll {
            65..=71 => (APP_PODS, "LOCK", json!({})),
            72..=78 => (APP_PODS, "UNLOCK", json!({})),
            79..=86 if !self.pods.is_empty() => {
                let target = pick(rng, &self.targets);
                (APP_PODS, "ASSIGN", json!({"map": { target: pick(rng, &self.pods) }}))
            }
            79..=94 => {
                let label = ["red", "blue", "green"][rng.random_range(0..3)];
                (APP_GROUPS, "ASSIGN", json!({"map": { pick(rng, &self.targets): label }}))
            }
            _ => (APP_GROUPS, "CLEAR", json!({})),
        }
    }

    fn envelope(&self, actor: &str, (app, kind, payload): (&str, &str, Value)) -> ActionEnvelope {
        let payload: Map<String, Value> = payload.as_object().cloned().unwrap_or_default();
        ActionEnvelope::new(&self.room, app, actor, kind, payload).with_client_ts(wall_clock_ms())
    }
}

fn wall_clock_ms() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as i64).unwrap_or(0)
}

/// Sends `count` actions at `interval` spacing (after `offset`), recording
/// each send time. Submissions reach the receive loop before the wire.
#[allow(clippy::too_many_arguments)]
async fn send_loop(
    mix: Arc<ActionMix>,
    actor: String,
    wire: UnboundedSender<String>,
    submissions: UnboundedSender<ActionEnvelope>,
    count: usize,
    offset: Duration,
    interval: Option<Duration>,
    mut rng: ChaCha8Rng,
) -> Vec<Instant> {
    let mut sent = Vec::with_capacity(count);
    let start = Instant::now() + offset;
    for k in 0..count {
        match interval {
            // Under load the timer can fire late with several sends overdue;
            // yielding lets other instructors' overdue sends interleave.
            Some(step) => {
                tokio::time::sleep_until(start + step * k as u32).await;
                tokio::task::yield_now().await;
            }
            None if k % 16 == 15 => tokio::task::yield_now().await,
            None => {}
        }
        let action = mix.envelope(&actor, mix.draw(&mut rng));
        let line = encode(&ClientMessage::action(&action));
        if submissions.unbounded_send(action).is_err() {
            break;
        }
        sent.push(Instant::now());
        if wire.unbounded_send(line).is_err() {
            break;
        }
    }
    sent
}

/// Streams a seeded random walk around `origin` until stopped.
async fn position_loop(
    wire: UnboundedSender<String>,
    rate: f64,
    origin: Vec3,
    mut rng: ChaCha8Rng,
    mut stop: watch::Receiver<bool>,
) {
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / rate));
    let mut p = origin;
    loop {
        tokio::select! {
            _ = ticker.tick() => {}
            _ = stop.changed() => return,
        }
        p = p + Vec3::new(rng.random_range(-0.5..0.5), 0.0, rng.random_range(-0.5..0.5));
        if wire.unbounded_send(encode(&ClientMessage::pos(p))).is_err() {
            return;
        }
    }
}

fn link_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

async fn wait_until(deadline: Instant, what: &'static str, mut done: impl FnMut() -> bool) -> Result<(), HarnessError> {
    while !done() {
        if Instant::now() >= deadline {
            return Err(HarnessError::Timeout(what));
        }
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    Ok(())
}

/// The server's digest, read by a fresh client from its join snapshot.
async fn observe(cfg: &ScenarioConfig, endpoint: &Endpoint, deadline: Instant) -> Result<StateDigest, HarnessError> {
    loop {
        let wrap = |source| HarnessError::Connect { client: "observer".into(), source };
        let mut client = open(endpoint, cfg.net_model, u64::MAX).await.map_err(wrap)?;
        match client.hello("observer", None).await {
            Ok(_) => {
                let snapshot = client.join(&cfg.room, &cfg.binding).await.map_err(wrap)?;
                return Ok(digest(&snapshot.state));
            }
            // Departing clients may still hold their slots for a moment.
            Err(ClientError::Refused { code, .. }) if code == "ServerFull" && Instant::now() < deadline => {
                tokio::time::sleep(Duration::from_millis(10)).await;
            }
            Err(e) => return Err(wrap(e)),
        }
    }
}

pub async fn run_scenario(cfg: &ScenarioConfig, endpoint: &Endpoint) -> Result<MetricsReport, HarnessError> {
    cfg.validate()?;
    let setup_start = Instant::now();
    let deadline = cfg.deadline(setup_start);

    // Connect: instructors in order, then students concurrently.
    let mut joined = Vec::with_capacity(cfg.n_clients);
    for i in 0..cfg.n_instructors {
        joined.push(connect_one(cfg, endpoint, i).await?);
    }
    let students: Vec<Result<Joined, HarnessError>> = futures::stream::iter(cfg.n_instructors..cfg.n_clients)
        .map(|i| connect_one(cfg, endpoint, i))
        .buffered(32)
        .collect()
        .await;
    for s in students {
        joined.push(s?);
    }

    let targets: Vec<String> = joined[..cfg.n_instructors].iter().map(|j| j.client_id.clone()).collect();
    let initial = joined[0].replica.state().clone();
    let mix = Arc::new(ActionMix {
        room: cfg.room.clone(),
        binding: cfg.binding.clone(),
        targets,
        pods: initial.pod_ids.iter().cloned().collect(),
    });

    // A deck is selected first so every later slide action is legal. It
    // counts toward the action total.
    let load_start = Instant::now();
    let mut setup_send: Option<Instant> = None;
    let mut setup_seq: Option<u64> = None;
    let needs_deck = cfg.binding == APP_SLIDES && initial.slides().is_some_and(|s| s.deck_id.is_none());
    let mut remaining = cfg.action_count;
    if needs_deck && remaining > 0 {
        let lead = &mut joined[0];
        let action = mix.envelope(
            &lead.client_id,
            (APP_SLIDES, "SELECT_DECK", json!({"deck_id": "deck-0", "deck_length": DECK_LENGTH})),
        );
        lead.replica.submit(action.clone());
        setup_send = Some(Instant::now());
        lead.client
            .send(&ClientMessage::action(&action))
            .map_err(|source| HarnessError::Connect { client: "sim-0".into(), source })?;
        // Only join-phase presence can precede the ack: no EVENT exists
        // before seq 1 of a fresh run.
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let reply =
                lead.client.recv_timeout(left).await.map_err(|_| HarnessError::Timeout("the deck selection ack"))?;
            match reply {
                ServerMessage::Ack { seq } => {
                    lead.replica.on_ack(seq).map_err(|e| HarnessError::InvalidConfig(format!("setup ack: {e}")))?;
                    setup_seq = Some(seq);
                    break;
                }
                ServerMessage::Presence { kind: PresenceKind::Join, client_id, .. } => lead.replica.on_join(&client_id),
                ServerMessage::Presence { kind: PresenceKind::Leave, client_id, .. } => {
                    lead.replica.on_leave(&client_id)
                }
                ServerMessage::Presence { .. } => {}
                other => return Err(HarnessError::InvalidConfig(format!("deck selection refused: {other:?}"))),
            }
        }
        remaining -= 1;
    }

    let progress = Arc::new(Progress::default());
    if let Some(seq) = setup_seq {
        progress.top_ack.store(seq, Ordering::SeqCst);
    }
    let (stop_tx, stop_rx) = watch::channel(false);
    let (quiet_tx, quiet_rx) = watch::channel(false);
    let interval = (cfg.action_rate > 0.0).then(|| Duration::from_secs_f64(cfg.n_instructors as f64 / cfg.action_rate));
    let spawn = initial_spawn(endpoint, &cfg.room);

    let mut receivers = Vec::with_capacity(cfg.n_clients);
    let mut senders = Vec::with_capacity(cfg.n_instructors);
    let mut last_seqs = Vec::with_capacity(cfg.n_clients);
    for (i, j) in joined.into_iter().enumerate() {
        let (sub_tx, sub_rx) = unbounded();
        let wire = j.client.sender();
        if i < cfg.n_instructors {
            let share = remaining / cfg.n_instructors + usize::from(i < remaining % cfg.n_instructors);
            let offset = interval.map_or(Duration::ZERO, |step| step.mul_f64(i as f64 / cfg.n_instructors as f64));
            let rng = link_rng(cfg.net_model.seed, 1_000 + i as u64);
            senders.push(tokio::spawn(send_loop(
                mix.clone(),
                j.client_id.clone(),
                wire.clone(),
                sub_tx,
                share,
                offset,
                interval,
                rng,
            )));
        } else {
            drop(sub_tx);
        }
        if cfg.presence_rate > 0.0 {
            let rng = link_rng(cfg.net_model.seed, 100_000 + i as u64);
            tokio::spawn(position_loop(wire, cfg.presence_rate, spawn, rng, quiet_rx.clone()));
        }
        let last = Arc::new(AtomicU64::new(0));
        last_seqs.push(last.clone());
        receivers.push(tokio::spawn(receive_loop(j, sub_rx, progress.clone(), last, stop_rx.clone())));
    }

    let mut sent_at = Vec::with_capacity(senders.len());
    for s in senders {
        sent_at.push(s.await.unwrap_or_default());
    }
    if let Some(t) = setup_send {
        sent_at[0].insert(0, t);
    }

    // Quiescence.
    let expected = remaining as u64;
    wait_until(deadline, "all action replies", || progress.responses.load(Ordering::SeqCst) >= expected).await?;
    let _ = quiet_tx.send(true);
    let top = progress.top_ack.load(Ordering::SeqCst);
    wait_until(deadline, "every client to reach the last seq", || {
        last_seqs.iter().all(|s| s.load(Ordering::SeqCst) >= top)
    })
    .await?;
    let quiet = cfg.quiet_window();
    loop {
        let before = progress.received.load(Ordering::SeqCst);
        tokio::time::sleep(quiet).await;
        if progress.received.load(Ordering::SeqCst) == before {
            break;
        }
        if Instant::now() >= deadline {
            return Err(HarnessError::Timeout("a quiet network"));
        }
    }
    let load_end = Instant::now();
    let _ = stop_tx.send(true);

    let mut outcomes = Vec::with_capacity(receivers.len());
    for r in receivers {
        outcomes.push(r.await.expect("receive loop does not panic"));
    }
    // Receivers own the connections; once they are gone every client has
    // disconnected and a slot is free for the observer.
    let server_digest = observe(cfg, endpoint, deadline).await?;

    Ok(aggregate(cfg, outcomes, sent_at, setup_seq, server_digest, load_end - load_start))
}

fn initial_spawn(endpoint: &Endpoint, room: &str) -> Vec3 {
    match endpoint {
        Endpoint::InMemory(hub) => hub.world().lesson(room).map_or(Vec3::ZERO, |l| l.spawn),
        Endpoint::Tcp(_) => Vec3::ZERO,
    }
}

fn aggregate(
    cfg: &ScenarioConfig,
    mut outcomes: Vec<ClientOutcome>,
    sent_at: Vec<Vec<Instant>>,
    setup_seq: Option<u64>,
    server_digest: StateDigest,
    elapsed: Duration,
) -> MetricsReport {
    // Instructor k-th response ↔ k-th send gives each seq its send time.
    let mut send_time: HashMap<u64, Instant> = HashMap::new();
    for (i, sends) in sent_at.iter().enumerate() {
        let mut responses = outcomes[i].responses.clone();
        if let Some(seq) = setup_seq.filter(|_| i == 0) {
            responses.insert(0, Some(seq));
        }
        for (t, r) in sends.iter().zip(responses) {
            if let Some(seq) = r {
                send_time.insert(seq, *t);
            }
        }
    }
    let mut samples = Vec::new();
    for o in &outcomes {
        for (seq, applied) in &o.applied {
            if let Some(sent) = send_time.get(seq) {
                samples.push(applied.saturating_duration_since(*sent).as_secs_f64() * 1000.0);
            }
        }
    }

    let acks: u64 = outcomes.iter().map(|o| o.acks).sum::<u64>() + u64::from(setup_seq.is_some());
    let rejected: u64 = outcomes.iter().map(|o| o.rejects).sum();
    let delivered: u64 = outcomes.iter().map(|o| o.events).sum();
    let total_messages: u64 = outcomes.iter().map(|o| o.received).sum();
    outcomes.sort_by(|a, b| a.client_id.cmp(&b.client_id));
    let digests: Vec<StateDigest> = outcomes.iter().filter_map(|o| o.digest.clone()).collect();
    let mut distinct = digests.clone();
    distinct.sort();
    distinct.dedup();
    let mut everything = digests.clone();
    everything.push(server_digest.clone());
    let converged = digests.len() == outcomes.len() && verify_convergence(&everything);

    let per_client_max_gap: BTreeMap<String, u64> = outcomes.iter().map(|o| (o.client_id.clone(), o.max_gap)).collect();
    let elapsed_s = elapsed.as_secs_f64();
    MetricsReport {
        n_clients: cfg.n_clients,
        n_instructors: cfg.n_instructors,
        actions_requested: cfg.action_count,
        accepted: acks,
        rejected,
        delivered_events: delivered,
        expected_events: acks * (cfg.n_clients as u64 - 1),
        acks,
        presence_messages: outcomes.iter().map(|o| o.presence).sum(),
        total_messages,
        protocol_errors: outcomes.iter().map(|o| o.protocol_errors).sum(),
        action_latency_ms: LatencySummary::from_samples(&samples),
        convergence: Convergence { converged, final_digest: server_digest, distinct_client_digests: distinct.len() },
        msgs_per_second: if elapsed_s > 0.0 { total_messages as f64 / elapsed_s } else { 0.0 },
        elapsed_s,
        max_seq_gap: per_client_max_gap.values().copied().max().unwrap_or(0),
        per_client_max_gap,
    }
}

/// Runs `cfg` against a fresh in-process hub serving `world`.
pub async fn run_in_memory(cfg: &ScenarioConfig, world: World) -> Result<MetricsReport, HarnessError> {
    let mut hub_config = crate::hub::HubConfig::new(&cfg.instructor_token);
    hub_config.max_clients = ScenarioConfig::MAX_CLIENTS;
    hub_config.presence_rate = crate::config::DEFAULT_PRESENCE_RATE;
    let hub = Hub::new(world, hub_config);
    let ticker = hub.spawn_presence_ticker();
    let result = run_scenario(cfg, &Endpoint::InMemory(hub)).await;
    if let Some(t) = ticker {
        t.abort();
    }
    result
}
