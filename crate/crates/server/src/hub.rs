//! Rooms, sessions and the per-room writer.
//!
//! The hub knows nothing about sockets. A transport turns the first line of
//! a connection into a [`Session`] via [`Hub::connect`], feeds every later
//! message to [`Session::handle`], and drains the session's [`Inbox`] back
//! onto the wire. Dropping the session is the disconnect path, so a clean
//! LEAVE-and-close and an abrupt drop run the same code.
//!
//! Every mutation of a room (seq assignment, reducer, log append, roster)
//! happens under that room's mutex, and so do the sends it causes. Each
//! client therefore sees a room's events in seq order.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, Weak};
use std::time::Duration;

use thiserror::Error;
use tokio::sync::mpsc;
use veld_core::action::is_room_wide;
use veld_core::world::{LessonModule, NavError, World};
use veld_core::{
    authorize, digest, make_snapshot, ActionEnvelope, ActionError, Authorization, Role, RoomState, SnapshotMessage,
    StateDigest, Vec3,
};

use crate::protocol::{encode, ClientMessage, PresenceKind, ServerMessage};

/// Encoded lines waiting to be written to one client.
pub type Inbox = mpsc::UnboundedReceiver<Arc<str>>;
type Outbox = mpsc::UnboundedSender<Arc<str>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HubError {
    #[error("first message must be HELLO with a name")]
    MalformedHello,
    #[error("server is full ({0} clients)")]
    ServerFull(usize),
    #[error("HELLO was already accepted on this connection")]
    DuplicateHello,
    #[error("could not parse message: {0}")]
    BadMessage(String),
    #[error("no room named {0:?}")]
    UnknownRoom(String),
    #[error("already in room {0:?}; leave first")]
    AlreadyJoined(String),
    #[error("not in room {0:?}")]
    NotInRoom(String),
    #[error("room {room:?} has no display app {binding:?}")]
    InvalidBinding { room: String, binding: String },
    #[error("role {0} may not mutate room state")]
    Unauthorized(Role),
    #[error("position must be finite")]
    InvalidPosition,
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Nav(#[from] NavError),
}

impl HubError {
    pub fn code(&self) -> &'static str {
        match self {
            HubError::MalformedHello => "MalformedHello",
            HubError::ServerFull(_) => "ServerFull",
            HubError::DuplicateHello => "DuplicateHello",
            HubError::BadMessage(_) => "BadMessage",
            HubError::UnknownRoom(_) => "UnknownRoom",
            HubError::AlreadyJoined(_) => "AlreadyJoined",
            HubError::NotInRoom(_) => "NotInRoom",
            HubError::InvalidBinding { .. } => "InvalidBinding",
            HubError::Unauthorized(_) => "Unauthorized",
            HubError::InvalidPosition => "InvalidPosition",
            HubError::Action(e) => e.code(),
            HubError::Nav(NavError::UnknownRoom(_)) => "UnknownRoom",
            HubError::Nav(NavError::UnknownPortal { .. }) => "UnknownPortal",
            HubError::Nav(NavError::TooFar { .. }) => "TooFar",
        }
    }

    pub fn to_message(&self, re: Option<&str>) -> ServerMessage {
        ServerMessage::error(self.code(), self.to_string(), re)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HubConfig {
    pub instructor_token: String,
    pub max_clients: usize,
    /// Position rebroadcasts per client per second; 0 forwards immediately.
    pub presence_rate: f64,
}

impl HubConfig {
    pub fn new(instructor_token: impl Into<String>) -> Self {
        Self {
            instructor_token: instructor_token.into(),
            max_clients: crate::config::DEFAULT_MAX_CLIENTS,
            presence_rate: crate::config::DEFAULT_PRESENCE_RATE,
        }
    }
}

/// Append-only record of a room's accepted actions; `entries[i].seq == i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomLog {
    room_id: String,
    entries: Vec<ActionEnvelope>,
}

impl RoomLog {
    pub fn new(room_id: impl Into<String>) -> Self {
        Self { room_id: room_id.into(), entries: Vec::new() }
    }

    pub fn room_id(&self) -> &str {
        &self.room_id
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.len() as u64 + 1
    }

    pub fn last_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn append(&mut self, action: ActionEnvelope) {
        assert_eq!(action.seq, Some(self.next_seq()), "log entries must be appended in seq order");
        self.entries.push(action);
    }

    pub fn entries(&self) -> &[ActionEnvelope] {
        &self.entries
    }

    /// Entries with seq strictly greater than `seq`.
    pub fn since(&self, seq: u64) -> &[ActionEnvelope] {
        let start = usize::try_from(seq).unwrap_or(usize::MAX).min(self.entries.len());
        &self.entries[start..]
    }
}

struct Member {
    role: Role,
    name: String,
    outbox: Outbox,
    position: Vec3,
    dirty: bool,
}

struct Room {
    lesson: LessonModule,
    state: RoomState,
    log: RoomLog,
    members: BTreeMap<String, Member>,
}

impl Room {
    fn send(member: &Member, line: &Arc<str>) {
        // A closed outbox means the client is already going away; its
        // session drop will clean up.
        let _ = member.outbox.send(line.clone());
    }

    fn broadcast_except(&self, except: &str, message: &ServerMessage) {
        let line: Arc<str> = encode(message).into();
        for (id, member) in &self.members {
            if id != except {
                Self::send(member, &line);
            }
        }
    }

    /// Where `requested` is stored for this client under the current pod lock.
    fn confine(&self, client_id: &str, role: Role, requested: Vec3) -> Vec3 {
        if role == Role::Instructor || !self.state.pods_locked {
            return requested;
        }
        let pod = self.state.pod_assignment.get(client_id).and_then(|pod_id| self.lesson.pod(pod_id));
        match pod {
            Some(pod) => requested.clamp_to_sphere(pod.center, pod.radius),
            None => requested,
        }
    }

    /// Pulls every assigned student into their pod after a lock or a new
    /// assignment, telling each moved student where they now are.
    fn reconfine(&mut self) {
        let ids: Vec<String> = self.members.keys().cloned().collect();
        for id in ids {
            let member = &self.members[&id];
            let stored = self.confine(&id, member.role, member.position);
            if stored != member.position {
                let member = self.members.get_mut(&id).expect("member exists");
                member.position = stored;
                member.dirty = true;
                let _ = member.outbox.send(encode(&ServerMessage::presence_pos(&id, stored)).into());
            }
        }
    }

    fn flush_presence(&mut self) {
        let dirty: Vec<(String, Vec3)> = self
            .members
            .iter_mut()
            .filter(|(_, m)| m.dirty)
            .map(|(id, m)| {
                m.dirty = false;
                (id.clone(), m.position)
            })
            .collect();
        for (id, position) in dirty {
            self.broadcast_except(&id, &ServerMessage::presence_pos(&id, position));
        }
    }
}

fn lock(room: &Mutex<Room>) -> MutexGuard<'_, Room> {
    room.lock().unwrap_or_else(PoisonError::into_inner)
}

pub struct Hub {
    world: World,
    config: HubConfig,
    rooms: BTreeMap<String, Mutex<Room>>,
    sessions: AtomicUsize,
    next_id: AtomicU64,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub")
            .field("rooms", &self.rooms.keys().collect::<Vec<_>>())
            .field("sessions", &self.occupancy())
            .finish()
    }
}

impl Hub {
    /// One room per lesson, each starting from the lesson's initial state.
    pub fn new(world: World, config: HubConfig) -> Arc<Self> {
        let rooms = world
            .lessons
            .iter()
            .map(|lesson| {
                let room = Room {
                    lesson: lesson.clone(),
                    state: lesson.initial_state(),
                    log: RoomLog::new(&lesson.name),
                    members: BTreeMap::new(),
                };
                (lesson.name.clone(), Mutex::new(room))
            })
            .collect();
        Arc::new(Self { world, config, rooms, sessions: AtomicUsize::new(0), next_id: AtomicU64::new(1) })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &HubConfig {
        &self.config
    }

    /// Number of sessions that passed HELLO and have not disconnected.
    pub fn occupancy(&self) -> usize {
        self.sessions.load(Ordering::SeqCst)
    }

    /// Authenticates a connection's first message. On success the WELCOME
    /// is already queued in the returned inbox.
    pub fn connect(self: &Arc<Self>, hello: &ClientMessage) -> Result<(Session, Inbox), HubError> {
        let ClientMessage::Hello { token, name } = hello else {
            return Err(HubError::MalformedHello);
        };
        let max = self.config.max_clients;
        self.sessions
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < max).then_some(n + 1))
            .map_err(|_| HubError::ServerFull(max))?;
        let role = match token {
            Some(t) if *t == self.config.instructor_token => Role::Instructor,
            _ => Role::Student,
        };
        let client_id = format!("c{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let (outbox, inbox) = mpsc::unbounded_channel();
        let _ = outbox.send(encode(&ServerMessage::Welcome { client_id: client_id.clone(), role }).into());
        let session =
            Session { hub: self.clone(), client_id, role, name: name.clone(), outbox, room: None, binding: None };
        Ok((session, inbox))
    }

    fn room(&self, room_id: &str) -> Result<&Mutex<Room>, HubError> {
        self.rooms.get(room_id).ok_or_else(|| HubError::UnknownRoom(room_id.to_string()))
    }

    pub fn room_digest(&self, room_id: &str) -> Option<StateDigest> {
        self.rooms.get(room_id).map(|r| digest(&lock(r).state))
    }

    pub fn room_snapshot(&self, room_id: &str) -> Option<SnapshotMessage> {
        self.rooms.get(room_id).map(|r| {
            let r = lock(r);
            make_snapshot(&r.state, r.log.last_seq())
        })
    }

    pub fn room_log(&self, room_id: &str) -> Option<RoomLog> {
        self.rooms.get(room_id).map(|r| lock(r).log.clone())
    }

    pub fn position_of(&self, room_id: &str, client_id: &str) -> Option<Vec3> {
        self.rooms.get(room_id).and_then(|r| lock(r).members.get(client_id).map(|m| m.position))
    }

    /// Rebroadcasts every position that changed since the last flush.
    pub fn flush_presence(&self) {
        for room in self.rooms.values() {
            lock(room).flush_presence();
        }
    }

    /// Flushes positions at the configured presence rate until the hub is
    /// dropped. Does nothing when the rate is 0 (positions go out immediately).
    pub fn spawn_presence_ticker(self: &Arc<Self>) -> Option<tokio::task::JoinHandle<()>> {
        if self.config.presence_rate <= 0.0 {
            return None;
        }
        let period = Duration::from_secs_f64(1.0 / self.config.presence_rate);
        let hub: Weak<Hub> = Arc::downgrade(self);
        Some(tokio::spawn(async move {
            let mut ticker = tokio::time::interval(period);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                ticker.tick().await;
                match hub.upgrade() {
                    Some(hub) => hub.flush_presence(),
                    None => break,
                }
            }
        }))
    }
}

/// One authenticated connection.
pub struct Session {
    hub: Arc<Hub>,
    client_id: String,
    role: Role,
    name: String,
    outbox: Outbox,
    room: Option<String>,
    binding: Option<String>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("client_id", &self.client_id)
            .field("role", &self.role)
            .field("room", &self.room)
            .finish()
    }
}

impl Session {
    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn room(&self) -> Option<&str> {
        self.room.as_deref()
    }

    pub fn binding(&self) -> Option<&str> {
        self.binding.as_deref()
    }

    fn reply(&self, message: &ServerMessage) {
        let _ = self.outbox.send(encode(message).into());
    }

    /// Handles one decoded message. Failures go back to this client only, as
    /// an ERROR whose `re` names the offending message type.
    pub fn handle(&mut self, message: ClientMessage) {
        let tag = message.tag();
        let result = match message {
            ClientMessage::Hello { .. } => Err(HubError::DuplicateHello),
            ClientMessage::Join { room, binding } => self.join(&room, &binding, None),
            ClientMessage::Leave => self.leave(),
            ClientMessage::Action { room, app, kind, payload, cts } => {
                let action = ActionEnvelope::new(room, app, &self.client_id, kind, payload).with_client_ts(cts);
                self.action(action)
            }
            ClientMessage::Pos { x, y, z } => self.position(Vec3::new(x, y, z)),
            ClientMessage::Teleport { room } => self.teleport(&room),
            ClientMessage::Portal { portal } => self.use_portal(portal),
        };
        if let Err(e) = result {
            self.reply(&e.to_message(Some(tag)));
        }
    }

    /// Reports a line that could not be decoded.
    pub fn reject_line(&self, error: &serde_json::Error) {
        self.reply(&HubError::BadMessage(error.to_string()).to_message(None));
    }

    fn join(&mut self, room_id: &str, binding: &str, at: Option<Vec3>) -> Result<(), HubError> {
        let room = self.hub.room(room_id)?;
        if let Some(current) = &self.room {
            return Err(HubError::AlreadyJoined(current.clone()));
        }
        let mut r = lock(room);
        if is_room_wide(binding) || !r.state.hosts_app(binding) {
            return Err(HubError::InvalidBinding { room: room_id.into(), binding: binding.into() });
        }
        let position = at.unwrap_or(r.lesson.spawn);
        r.state.join(&self.client_id);
        r.broadcast_except(
            &self.client_id,
            &ServerMessage::Presence {
                kind: PresenceKind::Join,
                client_id: self.client_id.clone(),
                name: Some(self.name.clone()),
                role: Some(self.role),
                x: Some(position.x),
                y: Some(position.y),
                z: Some(position.z),
            },
        );
        r.members.insert(
            self.client_id.clone(),
            Member { role: self.role, name: self.name.clone(), outbox: self.outbox.clone(), position, dirty: false },
        );
        self.reply(&ServerMessage::snapshot(make_snapshot(&r.state, r.log.last_seq())));
        for (id, m) in &r.members {
            self.reply(&ServerMessage::Presence {
                kind: PresenceKind::Pos,
                client_id: id.clone(),
                name: Some(m.name.clone()),
                role: Some(m.role),
                x: Some(m.position.x),
                y: Some(m.position.y),
                z: Some(m.position.z),
            });
        }
        self.room = Some(room_id.to_string());
        self.binding = Some(binding.to_string());
        Ok(())
    }

    fn leave(&mut self) -> Result<(), HubError> {
        let room_id = self.room.take().ok_or_else(|| HubError::NotInRoom(String::new()))?;
        self.binding = None;
        let mut r = lock(self.hub.room(&room_id)?);
        r.members.remove(&self.client_id);
        r.state.leave(&self.client_id);
        r.broadcast_except(
            &self.client_id,
            &ServerMessage::Presence {
                kind: PresenceKind::Leave,
                client_id: self.client_id.clone(),
                name: None,
                role: None,
                x: None,
                y: None,
                z: None,
            },
        );
        Ok(())
    }

    fn action(&mut self, action: ActionEnvelope) -> Result<(), HubError> {
        let current = self.room.as_deref().ok_or_else(|| HubError::NotInRoom(action.room_id.clone()))?;
        if current != action.room_id {
            return Err(HubError::NotInRoom(action.room_id));
        }
        if authorize(self.role, &action) == Authorization::Reject {
            return Err(HubError::Unauthorized(self.role));
        }
        let mut r = lock(self.hub.room(current)?);
        let action = action.with_seq(r.log.next_seq());
        r.state.apply(&action)?;
        let seq = r.log.next_seq();
        r.log.append(action.clone());
        self.reply(&ServerMessage::Ack { seq });
        r.broadcast_except(&self.client_id, &ServerMessage::event(&action));
        if is_room_wide(&action.app_id) {
            r.reconfine();
            if self.hub.config.presence_rate <= 0.0 {
                r.flush_presence();
            }
        }
        Ok(())
    }

    fn position(&mut self, requested: Vec3) -> Result<(), HubError> {
        let room_id = self.room.as_deref().ok_or_else(|| HubError::NotInRoom(String::new()))?;
        if !requested.is_finite() {
            return Err(HubError::InvalidPosition);
        }
        let mut r = lock(self.hub.room(room_id)?);
        let stored = r.confine(&self.client_id, self.role, requested);
        let member = r.members.get_mut(&self.client_id).expect("joined session is a member");
        member.position = stored;
        member.dirty = true;
        if stored != requested {
            self.reply(&ServerMessage::presence_pos(&self.client_id, stored));
        }
        if self.hub.config.presence_rate <= 0.0 {
            r.flush_presence();
        }
        Ok(())
    }

    /// Moves to `lesson`, keeping the current display binding when the
    /// target hosts it and falling back to the target's central display.
    fn relocate(&mut self, lesson: &str, position: Vec3, binding: Option<String>) -> Result<(), HubError> {
        let target = self.hub.room(lesson)?;
        let binding = {
            let r = lock(target);
            match binding {
                Some(b) if r.state.hosts_app(&b) => b,
                _ => r.lesson.central.clone(),
            }
        };
        if self.room.is_some() {
            self.leave()?;
        }
        self.join(lesson, &binding, Some(position))
    }

    fn teleport(&mut self, lesson: &str) -> Result<(), HubError> {
        let destination = self.hub.world.teleport(lesson)?;
        let (name, position) = (destination.lesson.name.clone(), destination.position);
        self.relocate(&name, position, self.binding.clone())
    }

    fn use_portal(&mut self, portal: usize) -> Result<(), HubError> {
        let room_id = self.room.clone().ok_or_else(|| HubError::NotInRoom(String::new()))?;
        let here = self.hub.position_of(&room_id, &self.client_id).expect("joined session is a member");
        let destination = self.hub.world.use_portal(&room_id, portal, here)?;
        let (name, position) = (destination.lesson.name.clone(), destination.position);
        self.relocate(&name, position, self.binding.clone())
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if self.room.is_some() {
            let _ = self.leave();
        }
        self.hub.sessions.fetch_sub(1, Ordering::SeqCst);
    }
}
