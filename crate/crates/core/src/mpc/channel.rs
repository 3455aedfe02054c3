//! Ordered in-memory point-to-point channels.

use std::collections::{HashMap, VecDeque};

use super::transcript::{MessageKind, Role, Transcript, TranscriptMode};
use crate::fixedpoint::circuit::CircuitError;

/// Simulated network: one FIFO per ordered (sender, receiver) pair. Every
/// send is recorded in the transcript before it is queued.
#[derive(Debug)]
pub struct Network {
    queues: HashMap<(Role, Role), VecDeque<Vec<u64>>>,
    transcript: Transcript,
    context: String,
}

impl Network {
    pub fn new(mode: TranscriptMode) -> Self {
        Network { queues: HashMap::new(), transcript: Transcript::new(mode), context: String::new() }
    }

    pub fn set_context(&mut self, context: impl Into<String>) {
        self.context = context.into();
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn begin_round(&mut self) -> u64 {
        self.transcript.next_round()
    }

    pub fn send(&mut self, round: u64, from: Role, to: Role, kind: MessageKind, label: &str, payload: Vec<u64>) {
        let bytes = payload.len() as u64 * 8;
        self.transcript.record(round, from, to, kind, label, &self.context, bytes);
        self.queues.entry((from, to)).or_default().push_back(payload);
    }

    pub fn recv(&mut self, from: Role, to: Role) -> Result<Vec<u64>, CircuitError> {
        self.queues
            .get_mut(&(from, to))
            .and_then(|q| q.pop_front())
            .ok_or_else(|| CircuitError::EmptyChannel { from: from.to_string(), to: to.to_string() })
    }

    /// True when every sent message has been consumed.
    pub fn is_drained(&self) -> bool {
        self.queues.values().all(|q| q.is_empty())
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}
