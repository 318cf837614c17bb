//! Action vocabulary: the envelope every state change travels in, the fixed
//! per-app kind registry, and the role/relevance predicates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ActionError;

pub const APP_SLIDES: &str = "slides";
pub const APP_FACEOFF: &str = "faceoff";
pub const APP_PODS: &str = "pods";
pub const APP_GROUPS: &str = "groups";

/// Apps whose actions affect every display in the room.
pub const ROOM_WIDE_APPS: [&str; 2] = [APP_PODS, APP_GROUPS];

/// Apps a lesson can host as display content.
pub const DISPLAY_APPS: [&str; 2] = [APP_SLIDES, APP_FACEOFF];

const SLIDE_KINDS: &[&str] = &["SELECT_DECK", "NEXT_SLIDE", "PREV_SLIDE", "GOTO_SLIDE"];
const FACEOFF_KINDS: &[&str] = &["NEXT_PROMPT", "REVEAL", "AWARD_POINT", "FINISH", "RESET"];
const POD_KINDS: &[&str] = &["LOCK", "UNLOCK", "ASSIGN"];
const GROUP_KINDS: &[&str] = &["ASSIGN", "CLEAR"];

/// The registered kind set of `app_id`, or `None` for an unknown app.
pub fn registered_kinds(app_id: &str) -> Option<&'static [&'static str]> {
    match app_id {
        APP_SLIDES => Some(SLIDE_KINDS),
        APP_FACEOFF => Some(FACEOFF_KINDS),
        APP_PODS => Some(POD_KINDS),
        APP_GROUPS => Some(GROUP_KINDS),
        _ => None,
    }
}

pub fn is_room_wide(app_id: &str) -> bool {
    ROOM_WIDE_APPS.contains(&app_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// The administrator: the only role allowed to change shared state.
    Instructor,
    Student,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Instructor => f.write_str("instructor"),
            Role::Student => f.write_str("student"),
        }
    }
}

/// A sequenced, attributed state-mutation command scoped to a room and app.
///
/// `seq` is `None` until the server accepts the action; accepted actions
/// carry a per-room sequence number starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEnvelope {
    pub seq: Option<u64>,
    pub room_id: String,
    pub app_id: String,
    pub actor_id: String,
    pub kind: String,
    pub payload: Map<String, Value>,
    pub client_ts: i64,
}

impl ActionEnvelope {
    pub fn new(
        room_id: impl Into<String>,
        app_id: impl Into<String>,
        actor_id: impl Into<String>,
        kind: impl Into<String>,
        payload: Map<String, Value>,
    ) -> Self {
        Self {
            seq: None,
            room_id: room_id.into(),
            app_id: app_id.into(),
            actor_id: actor_id.into(),
            kind: kind.into(),
            payload,
            client_ts: 0,
        }
    }

    pub fn with_seq(mut self, seq: u64) -> Self {
        self.seq = Some(seq);
        self
    }

    pub fn with_client_ts(mut self, client_ts: i64) -> Self {
        self.client_ts = client_ts;
        self
    }

    pub fn is_registered(&self) -> bool {
        registered_kinds(&self.app_id).is_some_and(|kinds| kinds.contains(&self.kind.as_str()))
    }
}

/// The app a client's display is currently showing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisplayBinding {
    pub app_id: String,
}

impl DisplayBinding {
    pub fn new(app_id: impl Into<String>) -> Self {
        Self { app_id: app_id.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Authorization {
    Accept,
    Reject,
}

/// Every registered kind mutates shared state, so only instructors may
/// issue actions at all.
pub fn authorize(role: Role, _action: &ActionEnvelope) -> Authorization {
    match role {
        Role::Instructor => Authorization::Accept,
        Role::Student => Authorization::Reject,
    }
}

pub fn is_relevant(action: &ActionEnvelope, binding: &DisplayBinding) -> bool {
    action.app_id == binding.app_id || is_room_wide(&action.app_id)
}

/// A validated, typed form of an action's `(app_id, kind, payload)` triple.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    SelectDeck { deck_id: String, deck_length: u32 },
    NextSlide,
    PrevSlide,
    GotoSlide { index: u64 },
    NextPrompt { prompt_id: String },
    Reveal,
    AwardPoint { student_id: String },
    FinishGame,
    ResetGame,
    LockPods,
    UnlockPods,
    AssignPods { map: BTreeMap<String, String> },
    AssignGroups { map: BTreeMap<String, Option<String>> },
    ClearGroups,
}

impl Command {
    pub fn parse(action: &ActionEnvelope) -> Result<Command, ActionError> {
        let kinds = registered_kinds(&action.app_id).ok_or_else(|| ActionError::UnknownApp(action.app_id.clone()))?;
        if !kinds.contains(&action.kind.as_str()) {
            return Err(ActionError::UnknownKind { app: action.app_id.clone(), kind: action.kind.clone() });
        }
        let p = PayloadReader::new(&action.kind, &action.payload);
        let cmd = match (action.app_id.as_str(), action.kind.as_str()) {
            (APP_SLIDES, "SELECT_DECK") => {
                p.only(&["deck_id", "deck_length"])?;
                let deck_length = p.uint("deck_length")?;
                if deck_length == 0 || deck_length > u64::from(u32::MAX) {
                    return Err(p.invalid("deck_length must be in 1..=u32::MAX"));
                }
                Command::SelectDeck { deck_id: p.nonempty_str("deck_id")?, deck_length: deck_length as u32 }
            }
            (APP_SLIDES, "NEXT_SLIDE") => p.empty().map(|_| Command::NextSlide)?,
            (APP_SLIDES, "PREV_SLIDE") => p.empty().map(|_| Command::PrevSlide)?,
            (APP_SLIDES, "GOTO_SLIDE") => {
                p.only(&["index"])?;
                Command::GotoSlide { index: p.uint("index")? }
            }
            (APP_FACEOFF, "NEXT_PROMPT") => {
                p.only(&["prompt_id"])?;
                Command::NextPrompt { prompt_id: p.nonempty_str("prompt_id")? }
            }
            (APP_FACEOFF, "REVEAL") => p.empty().map(|_| Command::Reveal)?,
            (APP_FACEOFF, "AWARD_POINT") => {
                p.only(&["student_id"])?;
                Command::AwardPoint { student_id: p.nonempty_str("student_id")? }
            }
            (APP_FACEOFF, "FINISH") => p.empty().map(|_| Command::FinishGame)?,
            (APP_FACEOFF, "RESET") => p.empty().map(|_| Command::ResetGame)?,
            (APP_PODS, "LOCK") => p.empty().map(|_| Command::LockPods)?,
            (APP_PODS, "UNLOCK") => p.empty().map(|_| Command::UnlockPods)?,
            (APP_PODS, "ASSIGN") => {
                p.only(&["map"])?;
                let mut map = BTreeMap::new();
                for (student, pod) in p.object("map")? {
                    match pod {
                        Value::String(pod) if !pod.is_empty() => {
                            map.insert(student.clone(), pod.clone());
                        }
                        _ => return Err(p.invalid("pod ids must be non-empty strings")),
                    }
                }
                Command::AssignPods { map }
            }
            (APP_GROUPS, "ASSIGN") => {
                p.only(&["map"])?;
                let mut map = BTreeMap::new();
                for (client, label) in p.object("map")? {
                    let label = match label {
                        Value::Null => None,
                        Value::String(s) if !s.is_empty() => Some(s.clone()),
                        _ => return Err(p.invalid("group labels must be non-empty strings or null")),
                    };
                    map.insert(client.clone(), label);
                }
                Command::AssignGroups { map }
            }
            (APP_GROUPS, "CLEAR") => p.empty().map(|_| Command::ClearGroups)?,
            _ => unreachable!("kind registry and parser out of sync"),
        };
        Ok(cmd)
    }
}

struct PayloadReader<'a> {
    kind: &'a str,
    payload: &'a Map<String, Value>,
}

impl<'a> PayloadReader<'a> {
    fn new(kind: &'a str, payload: &'a Map<String, Value>) -> Self {
        Self { kind, payload }
    }

    fn invalid(&self, detail: &str) -> ActionError {
        ActionError::InvalidPayload(format!("{}: {detail}", self.kind))
    }

    fn empty(&self) -> Result<(), ActionError> {
        self.only(&[])
    }

    fn only(&self, keys: &[&str]) -> Result<(), ActionError> {
        if let Some(extra) = self.payload.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(self.invalid(&format!("unexpected field {extra:?}")));
        }
        Ok(())
    }

    fn field(&self, key: &str) -> Result<&'a Value, ActionError> {
        self.payload.get(key).ok_or_else(|| self.invalid(&format!("missing field {key:?}")))
    }

    fn uint(&self, key: &str) -> Result<u64, ActionError> {
        self.field(key)?.as_u64().ok_or_else(|| self.invalid(&format!("{key:?} must be a non-negative integer")))
    }

    fn nonempty_str(&self, key: &str) -> Result<String, ActionError> {
        match self.field(key)? {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            _ => Err(self.invalid(&format!("{key:?} must be a non-empty string"))),
        }
    }

    fn object(&self, key: &str) -> Result<&'a Map<String, Value>, ActionError> {
        self.field(key)?.as_object().ok_or_else(|| self.invalid(&format!("{key:?} must be an object")))
    }
}
