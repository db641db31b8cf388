//! The analytic ladder: verbatim codes, gerund codes, code families and
//! themes, plus memos and comments.
//!
//! Objects are never physically removed. Deleted and rejected objects stay in
//! the log as tombstones so every id anyone ever referenced still resolves.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{ActorId, ObjectId};
use crate::integrity::{check_gerund, GerundPolicy, IntegrityVerdict};
use crate::phase::Phase;
use crate::transcript::{LocationRef, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodeLogError {
    #[error("verbatim phrase is empty")]
    EmptyPhrase,
    #[error("label is empty")]
    EmptyLabel,
    #[error("unknown verbatim code {0}")]
    UnknownVerbatimId(ObjectId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("an active {kind} already uses the label `{label}`")]
    DuplicateLabel { kind: &'static str, label: String },
    #[error("a theme needs at least one family")]
    NoFamilies,
    #[error("gerund code needs at least one source verbatim code")]
    NoSources,
}

impl CodeLogError {
    pub fn name(&self) -> &'static str {
        match self {
            CodeLogError::EmptyPhrase => "EmptyPhrase",
            CodeLogError::EmptyLabel => "EmptyLabel",
            CodeLogError::UnknownVerbatimId(_) => "UnknownVerbatimId",
            CodeLogError::UnknownObject(_) => "UnknownObject",
            CodeLogError::DuplicateLabel { .. } => "DuplicateLabel",
            CodeLogError::NoFamilies => "NoFamilies",
            CodeLogError::NoSources => "NoSources",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeStatus {
    AiProposed,
    Accepted,
    Modified,
    Rejected,
    Deleted,
    HumanInserted,
}

impl CodeStatus {
    /// Everything except tombstones.
    pub fn is_active(self) -> bool {
        !matches!(self, CodeStatus::Rejected | CodeStatus::Deleted)
    }

    pub fn initial_for(origin: Origin) -> Self {
        match origin {
            Origin::Ai => CodeStatus::AiProposed,
            Origin::Human => CodeStatus::HumanInserted,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodeStatus::AiProposed => "ai_proposed",
            CodeStatus::Accepted => "accepted",
            CodeStatus::Modified => "modified",
            CodeStatus::Rejected => "rejected",
            CodeStatus::Deleted => "deleted",
            CodeStatus::HumanInserted => "human_inserted",
        }
    }
}

impl fmt::Display for CodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Ai,
    Human,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Ai => "ai",
            Origin::Human => "human",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Structural,
    Personal,
    #[default]
    Unassigned,
}

impl Dimension {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "structural" => Some(Dimension::Structural),
            "personal" => Some(Dimension::Personal),
            "unassigned" | "none" | "" => Some(Dimension::Unassigned),
            _ => None,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Structural => "structural",
            Dimension::Personal => "personal",
            Dimension::Unassigned => "unassigned",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbatimCode {
    pub id: ObjectId,
    pub exact_phrase: String,
    pub location: LocationRef,
    pub paragraph_context: String,
    pub rationale: String,
    pub status: CodeStatus,
    pub origin: Origin,
    pub integrity: Option<IntegrityVerdict>,
    /// Set when the code could not be verified as exact and awaits a researcher.
    pub needs_human: bool,
    pub created_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GerundCode {
    pub id: ObjectId,
    pub label: String,
    pub source_verbatim_ids: Vec<ObjectId>,
    pub family_id: Option<ObjectId>,
    pub status: CodeStatus,
    pub origin: Origin,
    pub gerund_form: bool,
    pub needs_human: bool,
    pub created_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFamily {
    pub id: ObjectId,
    pub label: String,
    pub member_gerund_ids: Vec<ObjectId>,
    pub dimension: Dimension,
    pub status: CodeStatus,
    pub origin: Origin,
    pub created_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub id: ObjectId,
    pub label: String,
    pub family_ids: Vec<ObjectId>,
    pub definition: String,
    pub supporting_verbatim_ids: Vec<ObjectId>,
    pub dimension: Dimension,
    pub status: CodeStatus,
    pub origin: Origin,
    pub created_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoKind {
    PhaseSummary,
    SegmentedSummary,
    Analytic,
    Reflexive,
    Methodological,
}

impl MemoKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "phase_summary" => Some(MemoKind::PhaseSummary),
            "segmented_summary" => Some(MemoKind::SegmentedSummary),
            "analytic" => Some(MemoKind::Analytic),
            "reflexive" => Some(MemoKind::Reflexive),
            "methodological" => Some(MemoKind::Methodological),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MemoLink {
    Object { id: ObjectId },
    Location { location: LocationRef },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memo {
    pub id: ObjectId,
    pub kind: MemoKind,
    pub phase: Phase,
    pub body: String,
    pub linked_refs: Vec<MemoLink>,
    pub author: Origin,
    /// Machine flags such as `evidence_gap` or `definition`.
    pub flags: Vec<String>,
    pub created_seq: u64,
}

impl Memo {
    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn links_object(&self, id: &ObjectId) -> bool {
        self.linked_refs.iter().any(|l| matches!(l, MemoLink::Object { id: o } if o == id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: ObjectId,
    pub target_id: ObjectId,
    pub body: String,
    pub author_id: ActorId,
    pub timestamp: DateTime<Utc>,
    pub created_seq: u64,
}

/// Snapshot of any object a revision can act on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnalyticObject {
    Verbatim(VerbatimCode),
    Gerund(GerundCode),
    Family(CodeFamily),
    Theme(Theme),
    Comment(Comment),
}

impl AnalyticObject {
    pub fn id(&self) -> &ObjectId {
        match self {
            AnalyticObject::Verbatim(o) => &o.id,
            AnalyticObject::Gerund(o) => &o.id,
            AnalyticObject::Family(o) => &o.id,
            AnalyticObject::Theme(o) => &o.id,
            AnalyticObject::Comment(o) => &o.id,
        }
    }

    /// Comments have no lifecycle and count as always active.
    pub fn status(&self) -> Option<CodeStatus> {
        match self {
            AnalyticObject::Verbatim(o) => Some(o.status),
            AnalyticObject::Gerund(o) => Some(o.status),
            AnalyticObject::Family(o) => Some(o.status),
            AnalyticObject::Theme(o) => Some(o.status),
            AnalyticObject::Comment(_) => None,
        }
    }

    pub fn origin(&self) -> Origin {
        match self {
            AnalyticObject::Verbatim(o) => o.origin,
            AnalyticObject::Gerund(o) => o.origin,
            AnalyticObject::Family(o) => o.origin,
            AnalyticObject::Theme(o) => o.origin,
            AnalyticObject::Comment(_) => Origin::Human,
        }
    }

    pub fn set_status(&mut self, status: CodeStatus) {
        match self {
            AnalyticObject::Verbatim(o) => o.status = status,
            AnalyticObject::Gerund(o) => o.status = status,
            AnalyticObject::Family(o) => o.status = status,
            AnalyticObject::Theme(o) => o.status = status,
            AnalyticObject::Comment(_) => {}
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            AnalyticObject::Verbatim(_) => "verbatim",
            AnalyticObject::Gerund(_) => "gerund",
            AnalyticObject::Family(_) => "family",
            AnalyticObject::Theme(_) => "theme",
            AnalyticObject::Comment(_) => "comment",
        }
    }
}

/// All analytic objects of one session, in creation order per kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeLog {
    /// Number of revision actions applied.
    pub version: u64,
    pub verbatim: Vec<VerbatimCode>,
    pub gerunds: Vec<GerundCode>,
    pub families: Vec<CodeFamily>,
    pub themes: Vec<Theme>,
    pub memos: Vec<Memo>,
    pub comments: Vec<Comment>,
}

impl CodeLog {
    pub fn verbatim_code(&self, id: &ObjectId) -> Option<&VerbatimCode> {
        self.verbatim.iter().find(|c| &c.id == id)
    }

    pub fn gerund(&self, id: &ObjectId) -> Option<&GerundCode> {
        self.gerunds.iter().find(|c| &c.id == id)
    }

    pub fn family(&self, id: &ObjectId) -> Option<&CodeFamily> {
        self.families.iter().find(|c| &c.id == id)
    }

    pub fn theme(&self, id: &ObjectId) -> Option<&Theme> {
        self.themes.iter().find(|c| &c.id == id)
    }

    pub fn memo(&self, id: &ObjectId) -> Option<&Memo> {
        self.memos.iter().find(|c| &c.id == id)
    }

    pub fn active_verbatim(&self) -> impl Iterator<Item = &VerbatimCode> {
        self.verbatim.iter().filter(|c| c.status.is_active())
    }

    pub fn active_gerunds(&self) -> impl Iterator<Item = &GerundCode> {
        self.gerunds.iter().filter(|c| c.status.is_active())
    }

    pub fn active_families(&self) -> impl Iterator<Item = &CodeFamily> {
        self.families.iter().filter(|c| c.status.is_active())
    }

    pub fn active_themes(&self) -> impl Iterator<Item = &Theme> {
        self.themes.iter().filter(|c| c.status.is_active())
    }

    /// Whether any object (including memos and comments) carries this id.
    pub fn contains(&self, id: &ObjectId) -> bool {
        self.object(id).is_some() || self.memo(id).is_some()
    }

    /// Snapshot of a revisable object.
    pub fn object(&self, id: &ObjectId) -> Option<AnalyticObject> {
        if let Some(o) = self.verbatim_code(id) {
            return Some(AnalyticObject::Verbatim(o.clone()));
        }
        if let Some(o) = self.gerund(id) {
            return Some(AnalyticObject::Gerund(o.clone()));
        }
        if let Some(o) = self.family(id) {
            return Some(AnalyticObject::Family(o.clone()));
        }
        if let Some(o) = self.theme(id) {
            return Some(AnalyticObject::Theme(o.clone()));
        }
        self.comments
            .iter()
            .find(|c| &c.id == id)
            .map(|c| AnalyticObject::Comment(c.clone()))
    }

    /// Replaces an existing object by id, or appends a new one.
    pub fn put(&mut self, object: AnalyticObject) {
        fn upsert<T>(items: &mut Vec<T>, item: T, same: impl Fn(&T) -> bool) {
            match items.iter_mut().find(|x| same(x)) {
                Some(slot) => *slot = item,
                None => items.push(item),
            }
        }
        match object {
            AnalyticObject::Verbatim(o) => {
                let id = o.id.clone();
                upsert(&mut self.verbatim, o, |x| x.id == id)
            }
            AnalyticObject::Gerund(o) => {
                let id = o.id.clone();
                upsert(&mut self.gerunds, o, |x| x.id == id)
            }
            AnalyticObject::Family(o) => {
                let id = o.id.clone();
                upsert(&mut self.families, o, |x| x.id == id)
            }
            AnalyticObject::Theme(o) => {
                let id = o.id.clone();
                upsert(&mut self.themes, o, |x| x.id == id)
            }
            AnalyticObject::Comment(o) => {
                let id = o.id.clone();
                upsert(&mut self.comments, o, |x| x.id == id)
            }
        }
    }

    pub fn family_label_taken(&self, label: &str, except: Option<&ObjectId>) -> bool {
        let folded = label.trim().to_lowercase();
        self.active_families()
            .any(|f| Some(&f.id) != except && f.label.trim().to_lowercase() == folded)
    }

    pub fn theme_label_taken(&self, label: &str, except: Option<&ObjectId>) -> bool {
        let folded = label.trim().to_lowercase();
        self.active_themes()
            .any(|t| Some(&t.id) != except && t.label.trim().to_lowercase() == folded)
    }

    pub fn find_family_by_label(&self, label: &str) -> Option<&CodeFamily> {
        let folded = label.trim().to_lowercase();
        self.active_families().find(|f| f.label.trim().to_lowercase() == folded)
    }
}

/// Builds a verbatim code in its initial status. Integrity is checked separately.
pub fn new_verbatim_code(
    id: ObjectId,
    created_seq: u64,
    phrase: &str,
    location: LocationRef,
    context: &str,
    rationale: &str,
    origin: Origin,
) -> Result<VerbatimCode, CodeLogError> {
    let phrase = crate::transcript::normalize_fragment(phrase);
    if phrase.is_empty() {
        return Err(CodeLogError::EmptyPhrase);
    }
    Ok(VerbatimCode {
        id,
        exact_phrase: phrase,
        location,
        paragraph_context: context.to_owned(),
        rationale: rationale.trim().to_owned(),
        status: CodeStatus::initial_for(origin),
        origin,
        integrity: None,
        needs_human: false,
        created_seq,
    })
}

/// Builds a gerund code over existing, non-deleted verbatim codes.
pub fn derive_gerund(
    log: &CodeLog,
    id: ObjectId,
    created_seq: u64,
    verbatim_ids: &[ObjectId],
    label: &str,
    origin: Origin,
    policy: &GerundPolicy,
) -> Result<GerundCode, CodeLogError> {
    let label = label.trim();
    if label.is_empty() {
        return Err(CodeLogError::EmptyLabel);
    }
    if verbatim_ids.is_empty() {
        return Err(CodeLogError::NoSources);
    }
    for vid in verbatim_ids {
        match log.verbatim_code(vid) {
            Some(c) if c.status != CodeStatus::Deleted => {}
            _ => return Err(CodeLogError::UnknownVerbatimId(vid.clone())),
        }
    }
    let check = check_gerund(label, policy);
    Ok(GerundCode {
        id,
        label: label.to_owned(),
        source_verbatim_ids: verbatim_ids.to_vec(),
        family_id: None,
        status: CodeStatus::initial_for(origin),
        origin,
        gerund_form: check.passes,
        needs_human: !check.passes && origin == Origin::Ai,
        created_seq,
    })
}

pub const CODE_LOG_HEADER: [&str; 4] = [
    "Exact Keyword / Phrase (verbatim)",
    "Transcript + Line Reference",
    "Paragraph Context",
    "Rationale / Interpretation",
];

/// The four-column code log as plain strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeLogTable {
    pub header: [String; 4],
    pub rows: Vec<[String; 4]>,
}

impl CodeLogTable {
    pub fn empty() -> Self {
        Self { header: CODE_LOG_HEADER.map(String::from), rows: Vec::new() }
    }
}

/// Active verbatim codes in transcript order: paragraph, character offset,
/// then creation order.
pub fn ordered_active_codes(log: &CodeLog) -> Vec<&VerbatimCode> {
    let mut codes: Vec<&VerbatimCode> = log.active_verbatim().collect();
    codes.sort_by_key(|c| (c.location.order_key(), c.created_seq));
    codes
}

pub fn render_code_log(log: &CodeLog, transcript: Option<&Transcript>) -> CodeLogTable {
    let mut table = CodeLogTable::empty();
    for code in ordered_active_codes(log) {
        let trace = match transcript {
            Some(t) => t.trace(&code.location),
            None => code.location.to_string(),
        };
        table.rows.push([
            code.exact_phrase.clone(),
            trace,
            code.paragraph_context.clone(),
            code.rationale.clone(),
        ]);
    }
    table
}
