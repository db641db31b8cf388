//! Sessions, the consent-gated phase machine and command execution.
//!
//! All mutation goes through [`Session::execute`]. A command runs against a
//! clone of the session and only replaces it on success, so a failed command
//! leaves no trace, not even in the interaction log. Successful commands are
//! logged as a `human_action` entry first, followed by every prompt/response
//! pair the command produced.

mod log;
mod phases;
mod replay;

use std::collections::BTreeSet;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use log::{verify_chain, Direction, InteractionEntry, InteractionLog, Payload, GENESIS_HASH};
pub use replay::{recorded_responses, replay};

use crate::codelog::{CodeLog, CodeStatus, Memo, MemoKind, MemoLink, Origin};
use crate::coverage::{audit, default_statuses, CoverageReport};
use crate::error::EngineError;
use crate::ids::{ActorId, IdGen, ObjectId, ObjectKind, SessionId};
use crate::integrity::{validate_log, GerundPolicy, IntegrityConfig, IntegrityReport};
use crate::llm::prompt::{bindings, PromptTemplate};
use crate::llm::{Gateway, LlmConfig, TemplateId};
use crate::phase::{Phase, PhaseState};
use crate::revision::{
    build_action, replay_action, summarize, ActionSummary, CategoryMap, RevisionAction, RevisionEnv,
    RevisionRequest, Stamp,
};
use crate::transcript::{Transcript, DEFAULT_LINE_WIDTH, DEFAULT_PAGE_SIZE};

/// Who is acting and when. Every entry a command writes carries this time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ctx {
    pub actor: ActorId,
    pub at: DateTime<Utc>,
}

impl Ctx {
    pub fn new(actor: impl Into<ActorId>, at: DateTime<Utc>) -> Self {
        Self { actor: actor.into(), at }
    }

    /// Current time truncated to milliseconds, so it survives serialization.
    pub fn now(actor: impl Into<ActorId>) -> Self {
        Self::new(actor, Utc::now().trunc_subsecs(3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodingMode {
    ExactKeywordOnly,
    ExactPlusDescriptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    pub page_size: usize,
    pub line_width: usize,
    pub near_threshold: f64,
    pub window_band: f64,
    /// Re-prompts allowed for a non-exact candidate before it is left to a human.
    pub repair_budget: u32,
    pub gerund_exceptions: Vec<String>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        let integrity = IntegrityConfig::default();
        Self {
            page_size: DEFAULT_PAGE_SIZE,
            line_width: DEFAULT_LINE_WIDTH,
            near_threshold: integrity.near_threshold,
            window_band: integrity.window_band,
            repair_budget: 1,
            gerund_exceptions: Vec::new(),
        }
    }
}

impl AnalysisSettings {
    pub fn integrity(&self) -> IntegrityConfig {
        IntegrityConfig { near_threshold: self.near_threshold, window_band: self.window_band }
    }

    pub fn gerund_policy(&self) -> GerundPolicy {
        GerundPolicy { exceptions: self.gerund_exceptions.clone() }
    }
}

/// Consent to move into `to`, given by `actor`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub actor: ActorId,
    pub to: Phase,
}

// Commands are built, executed once and dropped; boxing buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    LoadTranscript {
        title: String,
        text: String,
    },
    Advance {
        approval: Option<Approval>,
    },
    Revert {
        to: Phase,
        #[serde(default)]
        rationale: String,
    },
    RunPhase,
    Revise {
        request: RevisionRequest,
    },
    RecordMemo {
        kind: MemoKind,
        body: String,
        #[serde(default)]
        links: Vec<MemoLink>,
    },
    ReflexivePrompt {
        positionality: String,
    },
    ValidateIntegrity,
    AuditCoverage {
        #[serde(default)]
        include_statuses: Option<BTreeSet<CodeStatus>>,
    },
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub created: Vec<ObjectId>,
    pub warnings: Vec<String>,
    pub action: Option<RevisionAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub research_question: String,
    pub coding_mode: CodingMode,
    pub transcript: Option<Transcript>,
    pub phase: PhaseState,
    /// Live analytic objects.
    pub codes: CodeLog,
    /// Phase outputs and memos only; `rebuild(base_log, trail)` equals `codes`.
    pub base_log: CodeLog,
    pub trail: Vec<RevisionAction>,
    pub interaction_log: InteractionLog,
    pub llm_config: LlmConfig,
    pub settings: AnalysisSettings,
    pub ids: IdGen,
    pub integrity_report: Option<IntegrityReport>,
    pub coverage_report: Option<CoverageReport>,
    pub report: Option<String>,
    pub created_at: DateTime<Utc>,
}

fn setup_prompt(question: &str) -> String {
    PromptTemplate::get(TemplateId::Setup)
        .render(&bindings([("research_question", question.to_owned())]))
        .expect("setup template only needs the research question")
}

impl Session {
    pub fn create(
        research_question: &str,
        coding_mode: CodingMode,
        llm_config: LlmConfig,
        settings: AnalysisSettings,
        ctx: &Ctx,
    ) -> Result<Session, EngineError> {
        let question = research_question.trim();
        if question.is_empty() {
            return Err(EngineError::EmptyResearchQuestion);
        }
        llm_config.validate()?;
        let digest = Sha256::digest(
            serde_json::to_vec(&(question, coding_mode, ctx.at)).expect("session seed serializes"),
        );
        let id = SessionId::new(format!("s-{}", &hex::encode(digest)[..16]));
        let seed = Payload::SessionOpened {
            session_id: id,
            actor: ctx.actor.clone(),
            research_question: question.to_owned(),
            coding_mode,
            llm_config,
            settings,
            setup_prompt: setup_prompt(question),
        };
        let mut log = InteractionLog::default();
        log.append(Direction::Prompt, Phase::Setup, seed, ctx.at);
        Self::from_seed(&log.entries()[0]).map(|mut s| {
            s.interaction_log = log;
            s
        })
    }

    /// Recreates the freshly created session described by a log's first entry.
    pub fn from_seed(entry: &InteractionEntry) -> Result<Session, EngineError> {
        let Payload::SessionOpened {
            session_id,
            research_question,
            coding_mode,
            llm_config,
            settings,
            ..
        } = &entry.payload
        else {
            return Err(EngineError::LogCorruption("first entry does not open a session".into()));
        };
        Ok(Session {
            id: session_id.clone(),
            research_question: research_question.clone(),
            coding_mode: *coding_mode,
            transcript: None,
            phase: PhaseState { current: Phase::Setup, entered_at: entry.timestamp, authorized_by: None },
            codes: CodeLog::default(),
            base_log: CodeLog::default(),
            trail: Vec::new(),
            interaction_log: InteractionLog::from_entries(vec![entry.clone()]),
            llm_config: llm_config.clone(),
            settings: settings.clone(),
            ids: IdGen::default(),
            integrity_report: None,
            coverage_report: None,
            report: None,
            created_at: entry.timestamp,
        })
    }

    pub fn current_phase(&self) -> Phase {
        self.phase.current
    }

    pub fn transcript(&self) -> Result<&Transcript, EngineError> {
        self.transcript
            .as_ref()
            .ok_or_else(|| EngineError::SetupIncomplete("no transcript loaded".into()))
    }

    pub fn action_summary(&self) -> ActionSummary {
        summarize(&self.trail, &CategoryMap::default())
    }

    /// Runs one command atomically.
    pub fn execute(&mut self, command: Command, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        let mut next = self.clone();
        next.interaction_log.append(
            Direction::HumanAction,
            next.phase.current,
            Payload::Command { actor: ctx.actor.clone(), command: command.clone() },
            ctx.at,
        );
        let outcome = next.apply(command, ctx, gateway)?;
        *self = next;
        Ok(outcome)
    }

    fn apply(&mut self, command: Command, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        match command {
            Command::LoadTranscript { title, text } => self.load_transcript(&title, &text),
            Command::Advance { approval } => self.advance(approval, ctx),
            Command::Revert { to, .. } => self.revert(to, ctx),
            Command::RunPhase => self.run_current_phase(ctx, gateway),
            Command::Revise { request } => self.revise(&request, ctx),
            Command::RecordMemo { kind, body, links } => {
                let id = self.push_memo(kind, body, links, Origin::Human, Vec::new());
                Ok(Outcome { created: vec![id], ..Outcome::default() })
            }
            Command::ReflexivePrompt { positionality } => self.reflexive_prompt(&positionality, ctx, gateway),
            Command::ValidateIntegrity => {
                self.validate_integrity()?;
                Ok(Outcome::default())
            }
            Command::AuditCoverage { include_statuses } => {
                self.audit_coverage(include_statuses.as_ref())?;
                Ok(Outcome::default())
            }
        }
    }

    fn load_transcript(&mut self, title: &str, text: &str) -> Result<Outcome, EngineError> {
        if self.phase.current != Phase::Setup {
            return Err(EngineError::WrongPhase { expected: Phase::Setup, actual: self.phase.current });
        }
        if self.transcript.is_some() {
            return Err(EngineError::TranscriptAlreadyLoaded);
        }
        self.transcript =
            Some(Transcript::ingest_with_width(text, title, self.settings.page_size, self.settings.line_width)?);
        Ok(Outcome::default())
    }

    fn advance(&mut self, approval: Option<Approval>, ctx: &Ctx) -> Result<Outcome, EngineError> {
        let approval = approval.ok_or(EngineError::UnauthorizedAdvance)?;
        if approval.actor.as_str().trim().is_empty() {
            return Err(EngineError::UnauthorizedAdvance);
        }
        let from = self.phase.current;
        if from.successor() != Some(approval.to) {
            return Err(EngineError::PhaseOrderViolation { from, to: approval.to });
        }
        if from == Phase::Setup {
            if self.research_question.trim().is_empty() {
                return Err(EngineError::SetupIncomplete("research question missing".into()));
            }
            if self.transcript.is_none() {
                return Err(EngineError::SetupIncomplete("no transcript loaded".into()));
            }
        }
        if approval.to == Phase::P3DescriptivePattern && self.coding_mode == CodingMode::ExactKeywordOnly {
            return Err(EngineError::ModeViolation(approval.to));
        }
        self.phase = PhaseState { current: approval.to, entered_at: ctx.at, authorized_by: Some(approval.actor) };
        Ok(Outcome::default())
    }

    fn revert(&mut self, to: Phase, ctx: &Ctx) -> Result<Outcome, EngineError> {
        let from = self.phase.current;
        if !to.is_analytic() || to >= from {
            return Err(EngineError::InvalidRevert { from, to });
        }
        self.phase = PhaseState { current: to, entered_at: ctx.at, authorized_by: Some(ctx.actor.clone()) };
        Ok(Outcome::default())
    }

    fn revise(&mut self, request: &RevisionRequest, ctx: &Ctx) -> Result<Outcome, EngineError> {
        let integrity = self.settings.integrity();
        let policy = self.settings.gerund_policy();
        let env = RevisionEnv { transcript: self.transcript.as_ref(), integrity: &integrity, gerund_policy: &policy };
        let stamp = Stamp { actor: &ctx.actor, phase: self.phase.current, at: ctx.at };
        let action = build_action(&self.codes, env, request, &mut self.ids, stamp)?;
        replay_action(&mut self.codes, &action)?;
        self.trail.push(action.clone());
        let created = match (&action.kind, &action.after, &action.replacement) {
            (_, _, Some(rep)) => vec![rep.id().clone()],
            (crate::revision::ActionKind::Insertion | crate::revision::ActionKind::Commenting, Some(a), _) => {
                vec![a.id().clone()]
            }
            _ => Vec::new(),
        };
        Ok(Outcome { created, warnings: Vec::new(), action: Some(action) })
    }

    /// Stores a memo in both the live log and the baseline.
    pub(crate) fn push_memo(
        &mut self,
        kind: MemoKind,
        body: String,
        links: Vec<MemoLink>,
        author: Origin,
        flags: Vec<String>,
    ) -> ObjectId {
        let (id, seq) = self.ids.next(ObjectKind::Memo);
        let memo = Memo {
            id: id.clone(),
            kind,
            phase: self.phase.current,
            body,
            linked_refs: links,
            author,
            flags,
            created_seq: seq,
        };
        self.codes.memos.push(memo.clone());
        self.base_log.memos.push(memo);
        id
    }

    pub fn validate_integrity(&mut self) -> Result<&IntegrityReport, EngineError> {
        let transcript = self.transcript.as_ref().ok_or_else(|| EngineError::SetupIncomplete("no transcript loaded".into()))?;
        let config = self.settings.integrity();
        // Stored verdicts always equal a fresh verification, so writing them
        // to the baseline keeps rebuild(base_log, trail) == codes.
        validate_log(&mut self.base_log, transcript, &config);
        let report = validate_log(&mut self.codes, transcript, &config);
        Ok(self.integrity_report.insert(report))
    }

    pub fn audit_coverage(
        &mut self,
        include_statuses: Option<&BTreeSet<CodeStatus>>,
    ) -> Result<&CoverageReport, EngineError> {
        let transcript = self.transcript()?;
        let statuses = include_statuses.cloned().unwrap_or_else(default_statuses);
        let report = audit(transcript, &self.codes.verbatim, &statuses, self.phase.current)?;
        Ok(self.coverage_report.insert(report))
    }

    fn reflexive_prompt(&mut self, positionality: &str, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        let phase = self.phase.current;
        if phase == Phase::Setup {
            return Err(EngineError::WrongPhase { expected: Phase::P1Familiarization, actual: phase });
        }
        let positionality = positionality.trim();
        let body = if positionality.is_empty() {
            "Before a reflexive question can be posed, describe your positionality: your \
             background, prior roles and relationship to the participants and setting."
                .to_owned()
        } else {
            let b = bindings([
                ("research_question", self.research_question.clone()),
                ("positionality", positionality.to_owned()),
            ]);
            let mut ex = phases::Exchanger::new(gateway, &self.llm_config, phase, ctx.at);
            let text = ex.ask(TemplateId::Reflexive, &b)?;
            self.commit_exchanges(ex.into_exchanges());
            text.trim().to_owned()
        };
        let id = self.push_memo(MemoKind::Methodological, body, Vec::new(), Origin::Ai, vec!["reflexive_prompt".into()]);
        Ok(Outcome { created: vec![id], ..Outcome::default() })
    }
}
