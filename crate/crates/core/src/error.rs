use crate::codelog::CodeLogError;
use crate::coverage::CoverageError;
use crate::interface::InterfaceError;
use crate::llm::LlmError;
use crate::phase::Phase;
use crate::revision::RevisionError;
use crate::transcript::TranscriptError;

/// Every error a session operation can surface. [`EngineError::name`] is the
/// stable domain name shown by the CLI and the service.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("research question is empty")]
    EmptyResearchQuestion,
    #[error("advancing requires an approval naming the actor and target phase")]
    UnauthorizedAdvance,
    #[error("cannot move from {from} to {to}: phases advance one step at a time")]
    PhaseOrderViolation { from: Phase, to: Phase },
    #[error("this session is limited to exact keyword coding and cannot enter {0}")]
    ModeViolation(Phase),
    #[error("setup incomplete: {0}")]
    SetupIncomplete(String),
    #[error("operation belongs to {expected}, but the session is in {actual}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("cannot revert from {from} to {to}")]
    InvalidRevert { from: Phase, to: Phase },
    #[error("no active verbatim codes to work from")]
    NoActiveCodes,
    #[error("no active code families to work from")]
    NoFamilies,
    #[error("interaction log is corrupt: {0}")]
    LogCorruption(String),
    #[error("a transcript is already loaded")]
    TranscriptAlreadyLoaded,
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    CodeLog(#[from] CodeLogError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Gateway(#[from] LlmError),
    #[error(transparent)]
    Revision(#[from] RevisionError),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
}

impl EngineError {
    pub fn name(&self) -> &'static str {
        match self {
            EngineError::EmptyResearchQuestion => "EmptyResearchQuestion",
            EngineError::UnauthorizedAdvance => "UnauthorizedAdvance",
            EngineError::PhaseOrderViolation { .. } => "PhaseOrderViolation",
            EngineError::ModeViolation(_) => "ModeViolation",
            EngineError::SetupIncomplete(_) => "SetupIncomplete",
            EngineError::WrongPhase { .. } => "WrongPhase",
            EngineError::InvalidRevert { .. } => "InvalidRevert",
            EngineError::NoActiveCodes => "NoActiveCodes",
            EngineError::NoFamilies => "NoFamilies",
            EngineError::LogCorruption(_) => "LogCorruption",
            EngineError::TranscriptAlreadyLoaded => "TranscriptAlreadyLoaded",
            EngineError::Transcript(e) => e.name(),
            EngineError::CodeLog(e) => e.name(),
            EngineError::Coverage(e) => e.name(),
            EngineError::Gateway(e) => e.name(),
            EngineError::Revision(e) => e.name(),
            EngineError::Interface(e) => e.name(),
        }
    }
}
