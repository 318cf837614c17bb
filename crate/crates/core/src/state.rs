//! Per-room shared state and the reducer that advances it.
//!
//! The reducer is the only way app state changes. It is pure: the same state
//! and action always yield the same result, and a rejected action leaves the
//! state exactly as it was.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::{ActionEnvelope, Command, DisplayBinding, APP_FACEOFF, APP_SLIDES};
use crate::error::ActionError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideShowState {
    pub deck_id: Option<String>,
    pub slide_index: u32,
    pub deck_length: u32,
}

impl SlideShowState {
    pub fn is_valid(&self) -> bool {
        match self.deck_id {
            None => self.slide_index == 0 && self.deck_length == 0,
            Some(_) => self.slide_index < self.deck_length,
        }
    }

    fn last_index(&self) -> Result<u32, ActionError> {
        match self.deck_id {
            Some(_) => Ok(self.deck_length - 1),
            None => Err(ActionError::IllegalTransition("no deck selected".into())),
        }
    }

    fn reduce(&mut self, cmd: &Command) -> Result<(), ActionError> {
        match cmd {
            Command::SelectDeck { deck_id, deck_length } => {
                self.deck_id = Some(deck_id.clone());
                self.deck_length = *deck_length;
                self.slide_index = 0;
            }
            Command::NextSlide => {
                let last = self.last_index()?;
                self.slide_index = self.slide_index.saturating_add(1).min(last);
            }
            Command::PrevSlide => {
                self.last_index()?;
                self.slide_index = self.slide_index.saturating_sub(1);
            }
            Command::GotoSlide { index } => {
                let last = self.last_index()?;
                self.slide_index = (*index).min(u64::from(last)) as u32;
            }
            _ => unreachable!("non-slide command routed to slides"),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceOffPhase {
    #[default]
    Lobby,
    PromptShown,
    Revealed,
    Finished,
}

/// The Face Off quiz game: the instructor shows a prompt, reveals the answer,
/// awards points, and moves on to the next round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceOffState {
    pub phase: FaceOffPhase,
    pub round: u32,
    pub prompt_id: Option<String>,
    pub scores: BTreeMap<String, u64>,
}

impl FaceOffState {
    pub fn is_valid(&self) -> bool {
        let needs_prompt = matches!(self.phase, FaceOffPhase::PromptShown | FaceOffPhase::Revealed);
        let round_ok = self.phase != FaceOffPhase::Lobby || self.round == 0;
        needs_prompt == self.prompt_id.is_some() && round_ok
    }

    fn illegal(&self, kind: &str) -> ActionError {
        ActionError::IllegalTransition(format!("{kind} while in {:?}", self.phase))
    }

    fn reduce(&mut self, cmd: &Command, occupants: &BTreeSet<String>) -> Result<(), ActionError> {
        use FaceOffPhase::*;
        match cmd {
            Command::NextPrompt { prompt_id } => {
                if self.phase == Finished {
                    return Err(self.illegal("NEXT_PROMPT"));
                }
                self.phase = PromptShown;
                self.round += 1;
                self.prompt_id = Some(prompt_id.clone());
            }
            Command::Reveal => {
                if self.phase != PromptShown {
                    return Err(self.illegal("REVEAL"));
                }
                self.phase = Revealed;
            }
            Command::AwardPoint { student_id } => {
                if self.phase != Revealed {
                    return Err(self.illegal("AWARD_POINT"));
                }
                if !occupants.contains(student_id) {
                    return Err(ActionError::UnknownStudent(student_id.clone()));
                }
                *self.scores.entry(student_id.clone()).or_default() += 1;
            }
            Command::FinishGame => {
                if !matches!(self.phase, PromptShown | Revealed) {
                    return Err(self.illegal("FINISH"));
                }
                self.phase = Finished;
                self.prompt_id = None;
            }
            Command::ResetGame => *self = FaceOffState::default(),
            _ => unreachable!("non-faceoff command routed to faceoff"),
        }
        Ok(())
    }
}

/// State of one display app hosted by a room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "app", rename_all = "lowercase")]
pub enum AppState {
    Slides(SlideShowState),
    Faceoff(FaceOffState),
}

impl AppState {
    pub fn initial(app_id: &str) -> Option<AppState> {
        match app_id {
            APP_SLIDES => Some(AppState::Slides(SlideShowState::default())),
            APP_FACEOFF => Some(AppState::Faceoff(FaceOffState::default())),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            AppState::Slides(s) => s.is_valid(),
            AppState::Faceoff(f) => f.is_valid(),
        }
    }
}

/// Shared state of one lesson room.
///
/// `occupants` mirrors the live roster. It is carried in snapshots so clients
/// can validate occupant-scoped actions, but it is presence data and is left
/// out of the state digest (see [`crate::canonical::digest`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomState {
    pub room_id: String,
    pub apps: BTreeMap<String, AppState>,
    pub pods_locked: bool,
    pub pod_ids: BTreeSet<String>,
    pub pod_assignment: BTreeMap<String, String>,
    pub occupants: BTreeSet<String>,
    pub group_assignment: BTreeMap<String, Option<String>>,
}

impl RoomState {
    /// A room hosting both display apps and no pods.
    pub fn new(room_id: impl Into<String>) -> Self {
        Self::with_apps(room_id, [APP_SLIDES, APP_FACEOFF], std::iter::empty::<String>())
    }

    /// Unknown display app ids are skipped.
    pub fn with_apps<A, P>(room_id: impl Into<String>, apps: A, pod_ids: P) -> Self
    where
        A: IntoIterator,
        A::Item: AsRef<str>,
        P: IntoIterator,
        P::Item: Into<String>,
    {
        let apps = apps
            .into_iter()
            .filter_map(|id| {
                let id = id.as_ref();
                AppState::initial(id).map(|state| (id.to_string(), state))
            })
            .collect();
        Self {
            room_id: room_id.into(),
            apps,
            pods_locked: false,
            pod_ids: pod_ids.into_iter().map(Into::into).collect(),
            pod_assignment: BTreeMap::new(),
            occupants: BTreeSet::new(),
            group_assignment: BTreeMap::new(),
        }
    }

    pub fn slides(&self) -> Option<&SlideShowState> {
        match self.apps.get(APP_SLIDES) {
            Some(AppState::Slides(s)) => Some(s),
            _ => None,
        }
    }

    pub fn faceoff(&self) -> Option<&FaceOffState> {
        match self.apps.get(APP_FACEOFF) {
            Some(AppState::Faceoff(f)) => Some(f),
            _ => None,
        }
    }

    pub fn hosts_app(&self, app_id: &str) -> bool {
        self.apps.contains_key(app_id)
    }

    /// Group and pod assignments are allowed to outlive an occupant's
    /// departure, so they are not checked against `occupants` here.
    pub fn is_valid(&self) -> bool {
        self.apps.values().all(AppState::is_valid) && self.pod_assignment.values().all(|pod| self.pod_ids.contains(pod))
    }

    pub fn join(&mut self, client_id: &str) -> bool {
        self.occupants.insert(client_id.to_string())
    }

    pub fn leave(&mut self, client_id: &str) -> bool {
        self.occupants.remove(client_id)
    }

    /// The part of the room a display bound to `binding` tracks: the bound
    /// app plus everything room-wide.
    pub fn view(&self, binding: &DisplayBinding) -> RoomState {
        let mut view = self.clone();
        view.apps.retain(|id, _| *id == binding.app_id);
        view
    }

    /// Applies an accepted action in place. Validation happens before any
    /// field is touched, so on error `self` is unchanged.
    pub fn apply(&mut self, action: &ActionEnvelope) -> Result<(), ActionError> {
        if action.seq.is_none() {
            return Err(ActionError::Unsequenced);
        }
        if action.room_id != self.room_id {
            return Err(ActionError::RoomMismatch { action: action.room_id.clone(), state: self.room_id.clone() });
        }
        let cmd = Command::parse(action)?;
        match cmd {
            Command::LockPods => self.pods_locked = true,
            Command::UnlockPods => self.pods_locked = false,
            Command::AssignPods { map } => {
                if let Some(pod) = map.values().find(|pod| !self.pod_ids.contains(*pod)) {
                    return Err(ActionError::UnknownPod(pod.clone()));
                }
                self.check_occupants(map.keys())?;
                self.pod_assignment = map;
            }
            Command::AssignGroups { map } => {
                self.check_occupants(map.keys())?;
                self.group_assignment = map;
            }
            Command::ClearGroups => self.group_assignment.clear(),
            ref app_cmd => {
                let occupants = &self.occupants;
                let app =
                    self.apps.get_mut(&action.app_id).ok_or_else(|| ActionError::UnknownApp(action.app_id.clone()))?;
                match app {
                    AppState::Slides(s) => s.reduce(app_cmd)?,
                    AppState::Faceoff(f) => f.reduce(app_cmd, occupants)?,
                }
            }
        }
        Ok(())
    }

    fn check_occupants<'a>(&self, ids: impl Iterator<Item = &'a String>) -> Result<(), ActionError> {
        for id in ids {
            if !self.occupants.contains(id) {
                return Err(ActionError::UnknownStudent(id.clone()));
            }
        }
        Ok(())
    }
}

/// Pure reducer: returns the successor state, or the error with `state`
/// untouched.
pub fn apply_action(state: &RoomState, action: &ActionEnvelope) -> Result<RoomState, ActionError> {
    let mut next = state.clone();
    next.apply(action)?;
    Ok(next)
}
