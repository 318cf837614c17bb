//! Pure models behind the veld classroom sync service: the replicated room
//! state and its reducer, spatial audio attenuation, the lesson world
//! registry, and survey analytics.
//!
//! Nothing in this crate performs I/O beyond parsing caller-supplied text;
//! every function is safe to call from any thread.

pub mod action;
pub mod audio;
pub mod canonical;
pub mod error;
pub mod geometry;
pub mod replica;
pub mod state;
pub mod survey;
pub mod world;

pub use action::{authorize, is_relevant, ActionEnvelope, Authorization, DisplayBinding, Role};
pub use canonical::{digest, make_snapshot, view_digest, SnapshotMessage, StateDigest};
pub use error::ActionError;
pub use geometry::{Bounds, Vec3};
pub use state::{apply_action, AppState, FaceOffPhase, FaceOffState, RoomState, SlideShowState};
