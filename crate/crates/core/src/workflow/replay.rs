//! Deterministic re-execution of an interaction log.
//!
//! Human actions are executed again in order; model calls are answered from
//! the responses recorded in the log, never from a live backend. The replay
//! must regenerate the log entry for entry, otherwise the log is corrupt.

use std::sync::Arc;

use super::{verify_chain, Ctx, Direction, InteractionEntry, Payload, Session};
use crate::error::EngineError;
use crate::llm::{Gateway, ReplayBackend};

/// `(request_hash, response_text)` pairs in log order.
pub fn recorded_responses(entries: &[InteractionEntry]) -> Vec<(String, String)> {
    entries
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Response { request_hash, text, .. } => Some((request_hash.clone(), text.clone())),
            _ => None,
        })
        .collect()
}

/// Rebuilds a session from its interaction log.
///
/// With `initial`, the initial session's own log must be a prefix of
/// `entries` and only the remainder is re-executed. Without it the session
/// is recreated from the log's opening entry.
pub fn replay(entries: &[InteractionEntry], initial: Option<&Session>) -> Result<Session, EngineError> {
    verify_chain(entries).map_err(EngineError::LogCorruption)?;
    let mut session = match initial {
        Some(s) => {
            let prefix = s.interaction_log.entries();
            if entries.is_empty() {
                return Ok(s.clone());
            }
            if prefix.len() > entries.len() || prefix != &entries[..prefix.len()] {
                return Err(EngineError::LogCorruption(
                    "the initial session's log is not a prefix of the replayed log".into(),
                ));
            }
            s.clone()
        }
        None => {
            let first = entries
                .first()
                .ok_or_else(|| EngineError::LogCorruption("empty log and no initial session".into()))?;
            Session::from_seed(first)?
        }
    };
    let start = session.interaction_log.len();
    let rest = &entries[start..];
    let gateway = Gateway::new(Arc::new(ReplayBackend::new(recorded_responses(rest))));

    for entry in rest.iter().filter(|e| e.direction == Direction::HumanAction) {
        let Payload::Command { actor, command } = &entry.payload else {
            return Err(EngineError::LogCorruption(format!("entry {} is not a command", entry.seq)));
        };
        let ctx = Ctx::new(actor.clone(), entry.timestamp);
        session.execute(command.clone(), &ctx, &gateway).map_err(|e| {
            EngineError::LogCorruption(format!("entry {} failed on replay: {} ({e})", entry.seq, e.name()))
        })?;
    }

    let produced = session.interaction_log.entries();
    if produced != entries {
        let at = produced
            .iter()
            .zip(entries)
            .position(|(a, b)| a != b)
            .unwrap_or(produced.len().min(entries.len()));
        return Err(EngineError::LogCorruption(format!("replay diverges from the log at entry {}", at + 1)));
    }
    Ok(session)
}
