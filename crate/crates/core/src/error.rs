use thiserror::Error;

/// Why an action was not applied. The room state is left untouched in every case.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("unknown app {0:?}")]
    UnknownApp(String),
    #[error("kind {kind:?} is not registered for app {app:?}")]
    UnknownKind { app: String, kind: String },
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("unknown pod {0:?}")]
    UnknownPod(String),
    #[error("{0:?} is not an occupant of this room")]
    UnknownStudent(String),
    #[error("action has no server-assigned sequence number")]
    Unsequenced,
    #[error("action targets room {action:?} but was applied to {state:?}")]
    RoomMismatch { action: String, state: String },
}

impl ActionError {
    /// Stable error code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            ActionError::UnknownApp(_) => "UnknownApp",
            ActionError::UnknownKind { .. } => "UnknownKind",
            ActionError::InvalidPayload(_) => "InvalidPayload",
            ActionError::IllegalTransition(_) => "IllegalTransition",
            ActionError::UnknownPod(_) => "UnknownPod",
            ActionError::UnknownStudent(_) => "UnknownStudent",
            ActionError::Unsequenced => "Unsequenced",
            ActionError::RoomMismatch { .. } => "RoomMismatch",
        }
    }
}
