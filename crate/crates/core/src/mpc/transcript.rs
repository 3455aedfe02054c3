//! Append-only record of every message the simulated parties exchange.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// A participant in the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Party(usize),
    Dealer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Party(p) => write!(f, "party-{p}"),
            Role::Dealer => f.write_str("dealer"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Correlated randomness from the dealer.
    Preprocessing,
    /// A share of a private input (data or noise).
    Input,
    /// A masked opening inside a protocol (looks uniform to the receiver).
    Open,
    /// An opening whose value is the output by design.
    Reveal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub round: u64,
    pub from: Role,
    pub to: Role,
    pub kind: MessageKind,
    pub label: String,
    /// Caller-defined phase, e.g. the training iteration.
    pub context: String,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptMode {
    /// Keep every message.
    Full,
    /// Keep inputs and reveals; count everything else.
    #[default]
    Summary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindTotals {
    pub messages: u64,
    pub bytes: u64,
}

/// One reveal: all messages of one opening round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealEvent {
    pub round: u64,
    pub label: String,
    pub context: String,
    pub elements: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Transcript {
    mode: TranscriptMode,
    entries: Vec<TranscriptEntry>,
    totals: BTreeMap<MessageKind, KindTotals>,
    seq: u64,
    rounds: u64,
}

impl Transcript {
    pub fn new(mode: TranscriptMode) -> Self {
        Transcript { mode, ..Default::default() }
    }

    pub fn mode(&self) -> TranscriptMode {
        self.mode
    }

    pub(crate) fn next_round(&mut self) -> u64 {
        self.rounds += 1;
        self.rounds
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn record(&mut self, round: u64, from: Role, to: Role, kind: MessageKind, label: &str, context: &str, bytes: u64) {
        let t = self.totals.entry(kind).or_default();
        t.messages += 1;
        t.bytes += bytes;
        self.seq += 1;
        let keep = match self.mode {
            TranscriptMode::Full => true,
            TranscriptMode::Summary => matches!(kind, MessageKind::Input | MessageKind::Reveal),
        };
        if keep {
            self.entries.push(TranscriptEntry {
                seq: self.seq,
                round,
                from,
                to,
                kind,
                label: label.to_string(),
                context: context.to_string(),
                bytes,
            });
        }
    }

    /// Retained entries in send order.
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn totals(&self) -> &BTreeMap<MessageKind, KindTotals> {
        &self.totals
    }

    pub fn total_messages(&self) -> u64 {
        self.totals.values().map(|t| t.messages).sum()
    }

    /// Reveal openings grouped by round.
    pub fn reveal_events(&self) -> Vec<RevealEvent> {
        let mut out: Vec<RevealEvent> = Vec::new();
        for e in self.entries.iter().filter(|e| e.kind == MessageKind::Reveal) {
            match out.last_mut() {
                Some(last) if last.round == e.round => {}
                _ => out.push(RevealEvent {
                    round: e.round,
                    label: e.label.clone(),
                    context: e.context.clone(),
                    elements: e.bytes / 8,
                }),
            }
        }
        out
    }

    /// Message shapes without payload-dependent fields, for comparing runs.
    pub fn shape_signature(&self) -> Vec<(u64, Role, Role, MessageKind, u64)> {
        self.entries.iter().map(|e| (e.round, e.from, e.to, e.kind, e.bytes)).collect()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> TranscriptSummary {
        TranscriptSummary {
            rounds: self.rounds,
            totals: self.totals.iter().map(|(k, v)| (*k, *v)).collect(),
            reveals: self.reveal_events().len() as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub rounds: u64,
    pub totals: Vec<(MessageKind, KindTotals)>,
    pub reveals: u64,
}
