//! Client-side mirror of a room: starts from a snapshot, then follows the
//! server's EVENT/ACK stream in sequence order, applying only the actions
//! relevant to its display.

use std::collections::VecDeque;

use thiserror::Error;

use crate::action::{is_relevant, ActionEnvelope, DisplayBinding};
use crate::canonical::{digest, view_digest, SnapshotMessage, StateDigest};
use crate::error::ActionError;
use crate::state::RoomState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicaError {
    #[error("sequence {got} is not after {last}")]
    Stale { last: u64, got: u64 },
    #[error("ack {0} with no action awaiting acknowledgement")]
    UnexpectedAck(u64),
    #[error("rejection with no action awaiting acknowledgement")]
    UnexpectedReject,
    #[error("server-accepted action failed locally: {0}")]
    Diverged(ActionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Applied,
    Filtered,
}

#[derive(Debug, Clone)]
pub struct Replica {
    binding: DisplayBinding,
    state: RoomState,
    last_seq: u64,
    max_gap: u64,
    pending: VecDeque<ActionEnvelope>,
}

impl Replica {
    pub fn from_snapshot(snapshot: &SnapshotMessage, binding: DisplayBinding) -> Self {
        Self { binding, state: snapshot.restore(), last_seq: snapshot.last_seq, max_gap: 0, pending: VecDeque::new() }
    }

    pub fn state(&self) -> &RoomState {
        &self.state
    }

    pub fn binding(&self) -> &DisplayBinding {
        &self.binding
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Largest number of sequence numbers skipped between two consecutive
    /// deliveries. Zero on a healthy stream.
    pub fn max_gap(&self) -> u64 {
        self.max_gap
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn digest(&self) -> StateDigest {
        digest(&self.state)
    }

    pub fn view_digest(&self) -> StateDigest {
        view_digest(&self.state, &self.binding)
    }

    fn advance(&mut self, seq: u64) -> Result<(), ReplicaError> {
        if seq <= self.last_seq {
            return Err(ReplicaError::Stale { last: self.last_seq, got: seq });
        }
        self.max_gap = self.max_gap.max(seq - self.last_seq - 1);
        self.last_seq = seq;
        Ok(())
    }

    fn apply_if_relevant(&mut self, action: &ActionEnvelope) -> Result<Outcome, ReplicaError> {
        if !is_relevant(action, &self.binding) {
            return Ok(Outcome::Filtered);
        }
        self.state.apply(action).map_err(ReplicaError::Diverged)?;
        Ok(Outcome::Applied)
    }

    /// An EVENT broadcast by the server for another client's action.
    pub fn on_event(&mut self, action: &ActionEnvelope) -> Result<Outcome, ReplicaError> {
        let seq = action.seq.ok_or(ReplicaError::Diverged(ActionError::Unsequenced))?;
        self.advance(seq)?;
        self.apply_if_relevant(action)
    }

    /// Records an action this client sent. It is applied once acknowledged,
    /// never optimistically.
    pub fn submit(&mut self, action: ActionEnvelope) {
        self.pending.push_back(action);
    }

    pub fn on_ack(&mut self, seq: u64) -> Result<Outcome, ReplicaError> {
        let action = self.pending.pop_front().ok_or(ReplicaError::UnexpectedAck(seq))?;
        self.advance(seq)?;
        self.apply_if_relevant(&action.with_seq(seq))
    }

    pub fn on_reject(&mut self) -> Result<ActionEnvelope, ReplicaError> {
        self.pending.pop_front().ok_or(ReplicaError::UnexpectedReject)
    }

    pub fn on_join(&mut self, client_id: &str) {
        self.state.join(client_id);
    }

    pub fn on_leave(&mut self, client_id: &str) {
        self.state.leave(client_id);
    }
}

#[cfg(test)]
mod tests {
    use serde_json::{json, Map};

    use super::*;
    use crate::action::{APP_FACEOFF, APP_PODS, APP_SLIDES};
    use crate::canonical::make_snapshot;

    fn action(app: &str, kind: &str, seq: u64) -> ActionEnvelope {
        let payload = match kind {
            "SELECT_DECK" => json!({"deck_id": "d", "deck_length": 5}),
            "NEXT_PROMPT" => json!({"prompt_id": "p"}),
            _ => json!({}),
        };
        let payload: Map<_, _> = payload.as_object().unwrap().clone();
        ActionEnvelope::new("r", app, "t", kind, payload).with_seq(seq)
    }

    #[test]
    fn filters_irrelevant_events() {
        let snap = make_snapshot(&RoomState::new("r"), 0);
        let mut rep = Replica::from_snapshot(&snap, DisplayBinding::new(APP_SLIDES));
        assert_eq!(rep.on_event(&action(APP_SLIDES, "SELECT_DECK", 1)), Ok(Outcome::Applied));
        assert_eq!(rep.on_event(&action(APP_FACEOFF, "NEXT_PROMPT", 2)), Ok(Outcome::Filtered));
        assert_eq!(rep.on_event(&action(APP_PODS, "LOCK", 3)), Ok(Outcome::Applied));
        assert!(rep.state().pods_locked);
        assert_eq!(rep.last_seq(), 3);
        assert_eq!(rep.max_gap(), 0);
    }

    #[test]
    fn records_gaps_and_rejects_stale() {
        let snap = make_snapshot(&RoomState::new("r"), 4);
        let mut rep = Replica::from_snapshot(&snap, DisplayBinding::new(APP_SLIDES));
        assert!(matches!(rep.on_event(&action(APP_PODS, "LOCK", 4)), Err(ReplicaError::Stale { .. })));
        rep.on_event(&action(APP_PODS, "LOCK", 7)).unwrap();
        assert_eq!(rep.max_gap(), 2);
    }

    #[test]
    fn own_actions_apply_on_ack_only() {
        let snap = make_snapshot(&RoomState::new("r"), 0);
        let mut rep = Replica::from_snapshot(&snap, DisplayBinding::new(APP_SLIDES));
        let mut mine = action(APP_PODS, "LOCK", 0);
        mine.seq = None;
        rep.submit(mine);
        assert!(!rep.state().pods_locked);
        rep.on_ack(1).unwrap();
        assert!(rep.state().pods_locked);
        assert_eq!(rep.on_ack(2), Err(ReplicaError::UnexpectedAck(2)));
    }
}
