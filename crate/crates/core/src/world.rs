//! Lesson registry: named lesson areas, their display apps, locking pods and
//! teleport portals, loaded from a JSON world file.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::action::{ActionEnvelope, APP_PODS, DISPLAY_APPS};
use crate::audio::{AudioError, AudioZone};
use crate::geometry::{Bounds, Vec3};
use crate::state::RoomState;

pub const DEFAULT_ACTIVATION_DISTANCE: f64 = 1.5;

/// A config that fails validation. Each invariant maps to one variant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("world config does not parse: {0}")]
    Parse(String),
    #[error("lesson name must be non-empty")]
    EmptyName,
    #[error("duplicate lesson name {0:?}")]
    DuplicateName(String),
    #[error("lesson {0:?} has inverted or non-finite bounds")]
    InvalidBounds(String),
    #[error("spawn point of lesson {0:?} lies outside its bounds")]
    SpawnOutOfBounds(String),
    #[error("lesson {lesson:?} lists unknown app {app:?}")]
    UnknownApp { lesson: String, app: String },
    #[error("lesson {lesson:?} lists app {app:?} twice")]
    DuplicateApp { lesson: String, app: String },
    #[error("central display {central:?} of lesson {lesson:?} is not one of its apps")]
    InvalidCentral { lesson: String, central: String },
    #[error("lesson {lesson:?} declares pod {pod:?} twice")]
    DuplicatePod { lesson: String, pod: String },
    #[error("pod {pod:?} in lesson {lesson:?} needs a positive radius")]
    InvalidPodRadius { lesson: String, pod: String },
    #[error("pod {pod:?} center lies outside lesson {lesson:?}")]
    PodOutOfBounds { lesson: String, pod: String },
    #[error("portal {index} of lesson {lesson:?} targets unknown lesson {target:?}")]
    DanglingPortal { lesson: String, index: usize, target: String },
    #[error("portal {index} of lesson {lesson:?} targets its own lesson")]
    SelfPortal { lesson: String, index: usize },
    #[error("portal {index} of lesson {lesson:?} lies outside its bounds")]
    PortalOutOfBounds { lesson: String, index: usize },
    #[error("portal {index} of lesson {lesson:?} needs a positive activation distance")]
    InvalidActivationDistance { lesson: String, index: usize },
    #[error("invalid audio zone: {0}")]
    InvalidAudioZone(AudioError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NavError {
    #[error("no lesson named {0:?}")]
    UnknownRoom(String),
    #[error("lesson {lesson:?} has no portal {index}")]
    UnknownPortal { lesson: String, index: usize },
    #[error("portal is {distance:.2} m away; activation distance is {limit:.2} m")]
    TooFar { distance: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pod {
    pub pod_id: String,
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portal {
    pub position: Vec3,
    pub target: String,
    #[serde(default = "default_activation", skip_serializing_if = "is_default_activation")]
    pub activation_distance: f64,
}

fn default_activation() -> f64 {
    DEFAULT_ACTIVATION_DISTANCE
}

fn is_default_activation(d: &f64) -> bool {
    *d == DEFAULT_ACTIVATION_DISTANCE
}

/// Guiding indicators, pathways and other scenery. Carries no behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decor {
    pub name: String,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LessonModule {
    pub name: String,
    pub bounds: Bounds,
    pub spawn: Vec3,
    pub apps: Vec<String>,
    pub central: String,
    #[serde(default)]
    pub pods: Vec<Pod>,
    #[serde(default)]
    pub portals: Vec<Portal>,
    #[serde(default)]
    pub decor: Vec<Decor>,
}

impl LessonModule {
    pub fn pod(&self, pod_id: &str) -> Option<&Pod> {
        self.pods.iter().find(|p| p.pod_id == pod_id)
    }

    /// Fresh shared state for the room backing this lesson.
    pub fn initial_state(&self) -> RoomState {
        RoomState::with_apps(&self.name, &self.apps, self.pods.iter().map(|p| p.pod_id.clone()))
    }

    fn validate_local(&self) -> Result<(), WorldError> {
        let lesson = || self.name.clone();
        if self.name.is_empty() {
            return Err(WorldError::EmptyName);
        }
        if !self.bounds.is_well_formed() {
            return Err(WorldError::InvalidBounds(lesson()));
        }
        if !self.bounds.contains(self.spawn) {
            return Err(WorldError::SpawnOutOfBounds(lesson()));
        }
        let mut apps = BTreeSet::new();
        for app in &self.apps {
            if !DISPLAY_APPS.contains(&app.as_str()) {
                return Err(WorldError::UnknownApp { lesson: lesson(), app: app.clone() });
            }
            if !apps.insert(app.as_str()) {
                return Err(WorldError::DuplicateApp { lesson: lesson(), app: app.clone() });
            }
        }
        if !apps.contains(self.central.as_str()) {
            return Err(WorldError::InvalidCentral { lesson: lesson(), central: self.central.clone() });
        }
        let mut pods = BTreeSet::new();
        for pod in &self.pods {
            if !pods.insert(pod.pod_id.as_str()) {
                return Err(WorldError::DuplicatePod { lesson: lesson(), pod: pod.pod_id.clone() });
            }
            if !(pod.radius > 0.0 && pod.radius.is_finite()) {
                return Err(WorldError::InvalidPodRadius { lesson: lesson(), pod: pod.pod_id.clone() });
            }
            if !self.bounds.contains(pod.center) {
                return Err(WorldError::PodOutOfBounds { lesson: lesson(), pod: pod.pod_id.clone() });
            }
        }
        for (index, portal) in self.portals.iter().enumerate() {
            if !self.bounds.contains(portal.position) {
                return Err(WorldError::PortalOutOfBounds { lesson: lesson(), index });
            }
            if portal.activation_distance.is_nan() || portal.activation_distance <= 0.0 {
                return Err(WorldError::InvalidActivationDistance { lesson: lesson(), index });
            }
            if portal.target == self.name {
                return Err(WorldError::SelfPortal { lesson: lesson(), index });
            }
        }
        Ok(())
    }
}

/// The validated, immutable world registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub lessons: Vec<LessonModule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_zone: Option<AudioZone>,
}

/// Where a teleport or portal hop lands.
#[derive(Debug, Clone, PartialEq)]
pub struct Destination<'a> {
    pub lesson: &'a LessonModule,
    pub position: Vec3,
}

impl World {
    pub fn validate(&self) -> Result<(), WorldError> {
        let mut names = BTreeSet::new();
        for lesson in &self.lessons {
            lesson.validate_local()?;
            if !names.insert(lesson.name.as_str()) {
                return Err(WorldError::DuplicateName(lesson.name.clone()));
            }
        }
        for lesson in &self.lessons {
            for (index, portal) in lesson.portals.iter().enumerate() {
                if !names.contains(portal.target.as_str()) {
                    return Err(WorldError::DanglingPortal {
                        lesson: lesson.name.clone(),
                        index,
                        target: portal.target.clone(),
                    });
                }
            }
        }
        if let Some(zone) = &self.audio_zone {
            zone.validate().map_err(WorldError::InvalidAudioZone)?;
        }
        Ok(())
    }

    pub fn lesson(&self, name: &str) -> Option<&LessonModule> {
        self.lessons.iter().find(|l| l.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.lessons.iter().map(|l| l.name.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world always serializes")
    }

    /// Teleporting to any registered lesson, including the current one, lands
    /// on its spawn point.
    pub fn teleport(&self, lesson_name: &str) -> Result<Destination<'_>, NavError> {
        let lesson = self.lesson(lesson_name).ok_or_else(|| NavError::UnknownRoom(lesson_name.to_string()))?;
        Ok(Destination { lesson, position: lesson.spawn })
    }

    /// Uses portal `index` of `from`, standing at `position`.
    pub fn use_portal(&self, from: &str, index: usize, position: Vec3) -> Result<Destination<'_>, NavError> {
        let lesson = self.lesson(from).ok_or_else(|| NavError::UnknownRoom(from.to_string()))?;
        let portal =
            lesson.portals.get(index).ok_or_else(|| NavError::UnknownPortal { lesson: from.to_string(), index })?;
        let distance = position.distance(portal.position);
        if distance.is_nan() || distance > portal.activation_distance {
            return Err(NavError::TooFar { distance, limit: portal.activation_distance });
        }
        self.teleport(&portal.target)
    }
}

pub fn load_world(config_text: &str) -> Result<World, WorldError> {
    let world: World = serde_json::from_str(config_text).map_err(|e| WorldError::Parse(e.to_string()))?;
    world.validate()?;
    Ok(world)
}

/// The pods ASSIGN action that stores `assignment` (student id → pod id) in
/// a room. Pod and occupant checks happen when the reducer applies it.
pub fn assign_pods_action(room_id: &str, actor_id: &str, assignment: &BTreeMap<String, String>) -> ActionEnvelope {
    let map: Map<String, Value> =
        assignment.iter().map(|(student, pod)| (student.clone(), Value::String(pod.clone()))).collect();
    let mut payload = Map::new();
    payload.insert("map".into(), Value::Object(map));
    ActionEnvelope::new(room_id, APP_PODS, actor_id, "ASSIGN", payload)
}
