//! Engine for human-AI collaborative inductive thematic analysis.
//!
//! A [`Session`] walks a transcript through six consent-gated phases
//! (familiarization, exact-keyword coding, gerund coding, theme development,
//! theme review, definition and report). Every LLM exchange and every human
//! action lands in a hash-chained interaction log, and every human revision
//! (modification, deletion, rejection, insertion, commenting) is kept in an
//! append-only trail that can rebuild the code log from its baseline.
//!
//! Module map:
//!
//! - [`transcript`]: ingestion, normalization, page segmentation, location refs
//! - [`codelog`]: verbatim codes, gerund codes, families, themes, memos, comments
//! - [`integrity`]: exact-substring and near-verbatim checks, gerund-form check
//! - [`coverage`]: paragraph coverage audit
//! - [`llm`]: prompt templates, chat backends (live, mock, replay), response parsers
//! - [`revision`]: the five human actions, trail rebuild and per-actor summaries
//! - [`workflow`]: sessions, phases, commands and log replay
//! - [`interface`]: session files, exports and imports, final report

pub mod codelog;
pub mod coverage;
pub mod error;
pub mod ids;
pub mod integrity;
pub mod interface;
pub mod llm;
pub mod phase;
pub mod revision;
pub mod transcript;
pub mod workflow;

pub use codelog::{
    AnalyticObject, CodeFamily, CodeLog, CodeStatus, Comment, Dimension, GerundCode, Memo,
    MemoKind, MemoLink, Origin, Theme, VerbatimCode,
};
pub use coverage::CoverageReport;
pub use error::EngineError;
pub use ids::{ActorId, ObjectId, SessionId, TranscriptId};
pub use integrity::{IntegrityReport, IntegrityVerdict, VerdictKind};
pub use phase::{Phase, PhaseState};
pub use revision::{ActionKind, ActionSummary, RevisionAction, RevisionRequest};
pub use transcript::{LocationRef, Page, Paragraph, Transcript};
pub use workflow::{AnalysisSettings, CodingMode, Command, Ctx, Session};
