//! Hash-chained interaction log.
//!
//! Every entry stores the hash of its predecessor and a SHA-256 over its own
//! canonical JSON form, so any edit, deletion or reordering is detectable.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AnalysisSettings, CodingMode, Command};
use crate::ids::{ActorId, SessionId};
use crate::llm::{LlmConfig, TemplateId, Usage};
use crate::phase::Phase;

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Prompt,
    Response,
    HumanAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    /// First entry of every log: everything needed to recreate the empty session.
    SessionOpened {
        session_id: SessionId,
        actor: ActorId,
        research_question: String,
        coding_mode: CodingMode,
        llm_config: LlmConfig,
        settings: AnalysisSettings,
        setup_prompt: String,
    },
    Command {
        actor: ActorId,
        command: Command,
    },
    Prompt {
        template: TemplateId,
        request_hash: String,
        system_role: String,
        prompt: String,
    },
    Response {
        request_hash: String,
        text: String,
        usage: Option<Usage>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEntry {
    pub seq: u64,
    pub direction: Direction,
    pub phase: Phase,
    pub payload: Payload,
    pub timestamp: DateTime<Utc>,
    pub prev_hash: String,
    pub hash: String,
}

#[derive(Serialize)]
struct Hashed<'a> {
    seq: u64,
    direction: Direction,
    phase: Phase,
    payload: &'a Payload,
    timestamp: &'a DateTime<Utc>,
}

fn entry_hash(prev_hash: &str, seq: u64, direction: Direction, phase: Phase, payload: &Payload, timestamp: &DateTime<Utc>) -> String {
    let body = serde_json::to_vec(&Hashed { seq, direction, phase, payload, timestamp })
        .expect("log entry serializes");
    let mut h = Sha256::new();
    h.update(prev_hash.as_bytes());
    h.update(&body);
    hex::encode(h.finalize())
}

impl InteractionEntry {
    pub fn expected_hash(&self) -> String {
        entry_hash(&self.prev_hash, self.seq, self.direction, self.phase, &self.payload, &self.timestamp)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InteractionLog {
    entries: Vec<InteractionEntry>,
}

impl InteractionLog {
    pub fn entries(&self) -> &[InteractionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_hash(&self) -> &str {
        self.entries.last().map(|e| e.hash.as_str()).unwrap_or(GENESIS_HASH)
    }

    pub fn append(&mut self, direction: Direction, phase: Phase, payload: Payload, timestamp: DateTime<Utc>) {
        let seq = self.entries.len() as u64 + 1;
        let prev_hash = self.last_hash().to_owned();
        let hash = entry_hash(&prev_hash, seq, direction, phase, &payload, &timestamp);
        self.entries.push(InteractionEntry { seq, direction, phase, payload, timestamp, prev_hash, hash });
    }

    pub fn from_entries(entries: Vec<InteractionEntry>) -> Self {
        Self { entries }
    }

    pub fn into_entries(self) -> Vec<InteractionEntry> {
        self.entries
    }
}

/// Checks sequence contiguity from 1 and the hash chain.
pub fn verify_chain(entries: &[InteractionEntry]) -> Result<(), String> {
    let mut prev = GENESIS_HASH.to_owned();
    for (i, e) in entries.iter().enumerate() {
        let expected_seq = i as u64 + 1;
        if e.seq != expected_seq {
            return Err(format!("expected sequence {expected_seq}, found {}", e.seq));
        }
        if e.prev_hash != prev {
            return Err(format!("entry {} does not chain to its predecessor", e.seq));
        }
        if e.expected_hash() != e.hash {
            return Err(format!("entry {} hash does not match its content", e.seq));
        }
        prev = e.hash.clone();
    }
    Ok(())
}
