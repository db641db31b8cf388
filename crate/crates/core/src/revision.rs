//! The five human analytic actions and the append-only trail they form.
//!
//! A [`RevisionRequest`] is what a researcher asks for. [`build_action`]
//! checks it against the current log and resolves it into a fully concrete
//! [`RevisionAction`] with before/after snapshots and fresh ids. Applying an
//! action ([`replay_action`]) is then purely mechanical, which is what lets
//! [`rebuild`] reproduce the live log from its baseline and the trail.
//!
//! A categorical revision (drop an AI label and put a human one in its place)
//! is a single Deletion or Rejection that carries a `replacement` object.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::codelog::{
    derive_gerund, new_verbatim_code, AnalyticObject, CodeFamily, CodeLog, CodeLogError, CodeStatus,
    Comment, Dimension, GerundCode, Origin, Theme, VerbatimCode,
};
use crate::ids::{ActorId, IdGen, ObjectId, ObjectKind};
use crate::integrity::{check_gerund, closest_window, verify, GerundPolicy, IntegrityConfig, VerdictKind};
use crate::phase::Phase;
use crate::transcript::{normalize_fragment, LocationRef, Transcript, TranscriptError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RevisionError {
    #[error("no object with id {0}")]
    TargetNotFound(ObjectId),
    #[error("object {0} is already deleted or rejected")]
    TargetNotActive(ObjectId),
    #[error("modification of {0} changes nothing")]
    NoOpModification(ObjectId),
    #[error("verbatim code fails integrity: {0}")]
    IntegrityRequired(String),
    #[error("only AI-proposed objects can be rejected; {0} is human-authored")]
    NotAiOrigin(ObjectId),
    #[error("label `{0}` is not in gerund form")]
    NotGerundForm(String),
    #[error("invalid revision: {0}")]
    InvalidRevision(String),
    #[error("trail sequence gap: expected {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("trail does not match the log: {0}")]
    PreconditionReplayFailure(String),
    #[error(transparent)]
    CodeLog(#[from] CodeLogError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

impl RevisionError {
    pub fn name(&self) -> &'static str {
        match self {
            RevisionError::TargetNotFound(_) => "TargetNotFound",
            RevisionError::TargetNotActive(_) => "TargetNotActive",
            RevisionError::NoOpModification(_) => "NoOpModification",
            RevisionError::IntegrityRequired(_) => "IntegrityRequired",
            RevisionError::NotAiOrigin(_) => "NotAiOrigin",
            RevisionError::NotGerundForm(_) => "NotGerundForm",
            RevisionError::InvalidRevision(_) => "InvalidRevision",
            RevisionError::SequenceGap { .. } => "SequenceGap",
            RevisionError::PreconditionReplayFailure(_) => "PreconditionReplayFailure",
            RevisionError::CodeLog(e) => e.name(),
            RevisionError::Transcript(e) => e.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Modification,
    Deletion,
    Rejection,
    Insertion,
    Commenting,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Field changes for a Modification. Fields that do not apply to the
/// target's type are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Patch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_phrase: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<LocationRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paragraph_context: Option<String>,
    /// The verbatim code's own rationale column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<Dimension>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_id: Option<ObjectId>,
    /// Mark the object accepted as is (or together with the other changes).
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub accept: bool,
}

impl Patch {
    fn has_content(&self) -> bool {
        self.exact_phrase.is_some()
            || self.location.is_some()
            || self.paragraph_context.is_some()
            || self.interpretation.is_some()
            || self.label.is_some()
            || self.definition.is_some()
            || self.dimension.is_some()
            || self.family_id.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NewObject {
    Verbatim {
        phrase: String,
        #[serde(default)]
        location: Option<LocationRef>,
        #[serde(default)]
        rationale: String,
    },
    Gerund {
        label: String,
        #[serde(default)]
        source_verbatim_ids: Vec<ObjectId>,
        #[serde(default)]
        family_id: Option<ObjectId>,
    },
    Family {
        label: String,
        #[serde(default)]
        member_gerund_ids: Vec<ObjectId>,
        #[serde(default)]
        dimension: Dimension,
    },
    Theme {
        label: String,
        #[serde(default)]
        family_ids: Vec<ObjectId>,
        #[serde(default)]
        definition: String,
        #[serde(default)]
        dimension: Dimension,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RevisionRequest {
    Modification {
        target_id: ObjectId,
        patch: Patch,
        #[serde(default)]
        rationale: String,
    },
    Deletion {
        target_id: ObjectId,
        #[serde(default)]
        rationale: String,
        #[serde(default)]
        replacement: Option<NewObject>,
    },
    Rejection {
        target_id: ObjectId,
        #[serde(default)]
        rationale: String,
        #[serde(default)]
        replacement: Option<NewObject>,
    },
    Insertion {
        object: NewObject,
        #[serde(default)]
        rationale: String,
        #[serde(default)]
        exempt_integrity: bool,
    },
    Commenting {
        target_id: ObjectId,
        body: String,
    },
}

impl RevisionRequest {
    pub fn kind(&self) -> ActionKind {
        match self {
            RevisionRequest::Modification { .. } => ActionKind::Modification,
            RevisionRequest::Deletion { .. } => ActionKind::Deletion,
            RevisionRequest::Rejection { .. } => ActionKind::Rejection,
            RevisionRequest::Insertion { .. } => ActionKind::Insertion,
            RevisionRequest::Commenting { .. } => ActionKind::Commenting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionAction {
    pub id: ObjectId,
    pub sequence: u64,
    pub kind: ActionKind,
    pub target_id: Option<ObjectId>,
    pub before: Option<AnalyticObject>,
    /// New state of the target, the inserted object, or the comment.
    pub after: Option<AnalyticObject>,
    /// Object put in place of a deleted or rejected target.
    pub replacement: Option<AnalyticObject>,
    pub rationale: String,
    pub exempt_integrity: bool,
    pub actor_id: ActorId,
    pub phase: Phase,
    pub timestamp: DateTime<Utc>,
}

/// What a revision needs to know besides the log itself.
#[derive(Debug, Clone, Copy)]
pub struct RevisionEnv<'a> {
    pub transcript: Option<&'a Transcript>,
    pub integrity: &'a IntegrityConfig,
    pub gerund_policy: &'a GerundPolicy,
}

/// Who, when and in which phase.
#[derive(Debug, Clone)]
pub struct Stamp<'a> {
    pub actor: &'a ActorId,
    pub phase: Phase,
    pub at: DateTime<Utc>,
}

pub fn build_action(
    log: &CodeLog,
    env: RevisionEnv<'_>,
    request: &RevisionRequest,
    ids: &mut IdGen,
    stamp: Stamp<'_>,
) -> Result<RevisionAction, RevisionError> {
    let mut target_id = None;
    let mut before = None;
    let after;
    let mut replacement = None;
    let mut exempt = false;
    let rationale;

    match request {
        RevisionRequest::Modification { target_id: id, patch, rationale: r } => {
            let current = active_target(log, id)?;
            let next = modify(log, env, &current, patch)?;
            // A content patch that leaves the content as it was is a no-op,
            // even though it would flip the status.
            let mut unchanged = next.clone();
            if let (true, Some(s)) = (patch.has_content(), current.status()) {
                unchanged.set_status(s);
            }
            if unchanged == current {
                return Err(RevisionError::NoOpModification(id.clone()));
            }
            target_id = Some(id.clone());
            before = Some(current);
            after = Some(next);
            rationale = r.clone();
        }
        RevisionRequest::Deletion { target_id: id, rationale: r, replacement: rep }
        | RevisionRequest::Rejection { target_id: id, rationale: r, replacement: rep } => {
            let current = active_target(log, id)?;
            let rejecting = matches!(request, RevisionRequest::Rejection { .. });
            if matches!(current, AnalyticObject::Comment(_)) {
                return Err(RevisionError::InvalidRevision("comments are never removed".into()));
            }
            if rejecting && current.origin() != Origin::Ai {
                return Err(RevisionError::NotAiOrigin(id.clone()));
            }
            let mut tomb = current.clone();
            tomb.set_status(if rejecting { CodeStatus::Rejected } else { CodeStatus::Deleted });
            if let Some(rep) = rep {
                let rep = inherit(rep, &current);
                replacement = Some(create(log, env, &rep, false, Some(id), ids)?);
            }
            target_id = Some(id.clone());
            before = Some(current);
            after = Some(tomb);
            rationale = r.clone();
        }
        RevisionRequest::Insertion { object, rationale: r, exempt_integrity } => {
            let created = create(log, env, object, *exempt_integrity, None, ids)?;
            let failed_integrity = matches!(
                &created,
                AnalyticObject::Verbatim(c) if !c.integrity.as_ref().is_some_and(|v| v.is_exact())
            );
            exempt = *exempt_integrity && failed_integrity;
            rationale = if exempt && !r.contains("integrity exemption") {
                format!("{} [integrity exemption]", r.trim()).trim().to_owned()
            } else {
                r.clone()
            };
            after = Some(created);
        }
        RevisionRequest::Commenting { target_id: id, body } => {
            if !log.contains(id) {
                return Err(RevisionError::TargetNotFound(id.clone()));
            }
            let (cid, seq) = ids.next(ObjectKind::Comment);
            after = Some(AnalyticObject::Comment(Comment {
                id: cid,
                target_id: id.clone(),
                body: body.clone(),
                author_id: stamp.actor.clone(),
                timestamp: stamp.at,
                created_seq: seq,
            }));
            target_id = Some(id.clone());
            rationale = String::new();
        }
    }

    let (id, _) = ids.next(ObjectKind::Action);
    Ok(RevisionAction {
        id,
        sequence: log.version + 1,
        kind: request.kind(),
        target_id,
        before,
        after,
        replacement,
        rationale,
        exempt_integrity: exempt,
        actor_id: stamp.actor.clone(),
        phase: stamp.phase,
        timestamp: stamp.at,
    })
}

fn active_target(log: &CodeLog, id: &ObjectId) -> Result<AnalyticObject, RevisionError> {
    let obj = log.object(id).ok_or_else(|| RevisionError::TargetNotFound(id.clone()))?;
    match obj.status() {
        Some(s) if !s.is_active() => Err(RevisionError::TargetNotActive(id.clone())),
        _ => Ok(obj),
    }
}

/// A replacement with empty links takes over the links of what it replaces.
fn inherit(rep: &NewObject, target: &AnalyticObject) -> NewObject {
    let mut rep = rep.clone();
    match (&mut rep, target) {
        (NewObject::Verbatim { location, rationale, .. }, AnalyticObject::Verbatim(t)) => {
            if location.is_none() {
                *location = Some(t.location.clone());
            }
            if rationale.is_empty() {
                *rationale = t.rationale.clone();
            }
        }
        (NewObject::Gerund { source_verbatim_ids, family_id, .. }, AnalyticObject::Gerund(t)) => {
            if source_verbatim_ids.is_empty() {
                *source_verbatim_ids = t.source_verbatim_ids.clone();
            }
            if family_id.is_none() {
                *family_id = t.family_id.clone();
            }
        }
        (NewObject::Family { member_gerund_ids, dimension, .. }, AnalyticObject::Family(t)) => {
            if member_gerund_ids.is_empty() {
                *member_gerund_ids = t.member_gerund_ids.clone();
            }
            if *dimension == Dimension::Unassigned {
                *dimension = t.dimension;
            }
        }
        (NewObject::Theme { family_ids, definition, dimension, .. }, AnalyticObject::Theme(t)) => {
            if family_ids.is_empty() {
                *family_ids = t.family_ids.clone();
            }
            if definition.is_empty() {
                *definition = t.definition.clone();
            }
            if *dimension == Dimension::Unassigned {
                *dimension = t.dimension;
            }
        }
        _ => {}
    }
    rep
}

fn need_transcript<'a>(env: RevisionEnv<'a>) -> Result<&'a Transcript, RevisionError> {
    env.transcript
        .ok_or_else(|| RevisionError::InvalidRevision("no transcript is loaded".into()))
}

/// Verifies a phrase, relocating to the matched span when it is exact
/// somewhere. Returns the code with location, context and verdict filled in.
///
/// A near-verbatim phrase is placed on the closest window; a phrase that is
/// not found at all keeps the location already on the code.
pub(crate) fn place_verbatim(
    code: &mut VerbatimCode,
    transcript: &Transcript,
    hint: Option<&LocationRef>,
    config: &IntegrityConfig,
) {
    let verdict = verify(&code.exact_phrase, transcript, hint, config);
    let location = match &verdict.matched_location {
        Some(m) => transcript.canonical(m),
        None => code.location.clone(),
    };
    let verdict = if verdict.kind == VerdictKind::LocationMismatch {
        verify(&code.exact_phrase, transcript, Some(&location), config)
    } else {
        verdict
    };
    code.paragraph_context = transcript
        .paragraphs
        .iter()
        .filter(|p| location.paragraphs().contains(&p.index))
        .map(|p| p.text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    code.location = location;
    code.needs_human = !verdict.is_exact();
    code.integrity = Some(verdict);
}

fn integrity_message(code: &VerbatimCode) -> String {
    match &code.integrity {
        Some(v) => match &v.suggested_exact {
            Some(s) => format!("`{}` is {}; the source reads `{s}`", code.exact_phrase, v.kind),
            None => format!("`{}` is {}", code.exact_phrase, v.kind),
        },
        None => format!("`{}` has no verdict", code.exact_phrase),
    }
}

fn create(
    log: &CodeLog,
    env: RevisionEnv<'_>,
    object: &NewObject,
    exempt: bool,
    replacing: Option<&ObjectId>,
    ids: &mut IdGen,
) -> Result<AnalyticObject, RevisionError> {
    match object {
        NewObject::Verbatim { phrase, location, rationale } => {
            let transcript = need_transcript(env)?;
            if let Some(loc) = location {
                transcript.validate(loc)?;
            }
            let hint = location.clone().map(|l| transcript.canonical(&l));
            let fallback = match &hint {
                Some(h) => h.clone(),
                None => closest_window(phrase, transcript, env.integrity.window_band)
                    .map(|w| transcript.span(w.paragraph, w.paragraph))
                    .unwrap_or_else(|| transcript.span(1, 1)),
            };
            let (id, seq) = ids.next(ObjectKind::Verbatim);
            let mut code = new_verbatim_code(id, seq, phrase, fallback, "", rationale, Origin::Human)?;
            place_verbatim(&mut code, transcript, hint.as_ref(), env.integrity);
            if code.needs_human && !exempt {
                return Err(RevisionError::IntegrityRequired(integrity_message(&code)));
            }
            Ok(AnalyticObject::Verbatim(code))
        }
        NewObject::Gerund { label, source_verbatim_ids, family_id } => {
            let (id, seq) = ids.next(ObjectKind::Gerund);
            let mut g =
                derive_gerund(log, id, seq, source_verbatim_ids, label, Origin::Human, env.gerund_policy)?;
            if !g.gerund_form {
                return Err(RevisionError::NotGerundForm(g.label));
            }
            if let Some(f) = family_id {
                active_family(log, f)?;
                g.family_id = Some(f.clone());
            }
            Ok(AnalyticObject::Gerund(g))
        }
        NewObject::Family { label, member_gerund_ids, dimension } => {
            let label = label.trim();
            if label.is_empty() {
                return Err(CodeLogError::EmptyLabel.into());
            }
            if log.family_label_taken(label, replacing) {
                return Err(CodeLogError::DuplicateLabel { kind: "family", label: label.into() }.into());
            }
            let mut members: Vec<ObjectId> = Vec::new();
            for g in member_gerund_ids {
                match log.gerund(g) {
                    Some(gc) if gc.status != CodeStatus::Deleted => {}
                    _ => return Err(RevisionError::TargetNotFound(g.clone())),
                }
                if !members.contains(g) {
                    members.push(g.clone());
                }
            }
            let (id, seq) = ids.next(ObjectKind::Family);
            Ok(AnalyticObject::Family(CodeFamily {
                id,
                label: label.to_owned(),
                member_gerund_ids: members,
                dimension: *dimension,
                status: CodeStatus::HumanInserted,
                origin: Origin::Human,
                created_seq: seq,
            }))
        }
        NewObject::Theme { label, family_ids, definition, dimension } => {
            let label = label.trim();
            if label.is_empty() {
                return Err(CodeLogError::EmptyLabel.into());
            }
            if log.theme_label_taken(label, replacing) {
                return Err(CodeLogError::DuplicateLabel { kind: "theme", label: label.into() }.into());
            }
            if family_ids.is_empty() {
                return Err(CodeLogError::NoFamilies.into());
            }
            for f in family_ids {
                if log.family(f).is_none() {
                    return Err(RevisionError::TargetNotFound(f.clone()));
                }
            }
            let (id, seq) = ids.next(ObjectKind::Theme);
            Ok(AnalyticObject::Theme(Theme {
                id,
                label: label.to_owned(),
                family_ids: family_ids.clone(),
                definition: definition.trim().to_owned(),
                supporting_verbatim_ids: supporting_verbatim(log, family_ids),
                dimension: *dimension,
                status: CodeStatus::HumanInserted,
                origin: Origin::Human,
                created_seq: seq,
            }))
        }
    }
}

fn active_family<'a>(log: &'a CodeLog, id: &ObjectId) -> Result<&'a CodeFamily, RevisionError> {
    match log.family(id) {
        Some(f) if f.status.is_active() => Ok(f),
        Some(_) => Err(RevisionError::TargetNotActive(id.clone())),
        None => Err(RevisionError::TargetNotFound(id.clone())),
    }
}

/// Sources of the active member gerunds of the given families, deduplicated
/// in first-seen order.
pub fn supporting_verbatim(log: &CodeLog, family_ids: &[ObjectId]) -> Vec<ObjectId> {
    let mut out: Vec<ObjectId> = Vec::new();
    for fid in family_ids {
        let Some(family) = log.family(fid) else { continue };
        for gid in &family.member_gerund_ids {
            let Some(g) = log.gerund(gid).filter(|g| g.status.is_active()) else { continue };
            for v in &g.source_verbatim_ids {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
    }
    out
}

fn reject_fields(patch: &Patch, allowed: &[&str], type_name: &str) -> Result<(), RevisionError> {
    let present = [
        ("exact_phrase", patch.exact_phrase.is_some()),
        ("location", patch.location.is_some()),
        ("paragraph_context", patch.paragraph_context.is_some()),
        ("interpretation", patch.interpretation.is_some()),
        ("label", patch.label.is_some()),
        ("definition", patch.definition.is_some()),
        ("dimension", patch.dimension.is_some()),
        ("family_id", patch.family_id.is_some()),
    ];
    for (name, set) in present {
        if set && !allowed.contains(&name) {
            return Err(RevisionError::InvalidRevision(format!("`{name}` does not apply to a {type_name}")));
        }
    }
    Ok(())
}

fn modify(
    log: &CodeLog,
    env: RevisionEnv<'_>,
    current: &AnalyticObject,
    patch: &Patch,
) -> Result<AnalyticObject, RevisionError> {
    if !patch.has_content() && !patch.accept {
        return Err(RevisionError::NoOpModification(current.id().clone()));
    }
    let status = if patch.has_content() { CodeStatus::Modified } else { CodeStatus::Accepted };
    let next = match current {
        AnalyticObject::Verbatim(c) => {
            reject_fields(
                patch,
                &["exact_phrase", "location", "paragraph_context", "interpretation"],
                "verbatim code",
            )?;
            let transcript = need_transcript(env)?;
            let mut code = c.clone();
            let moved = patch.exact_phrase.is_some() || patch.location.is_some();
            if let Some(p) = &patch.exact_phrase {
                code.exact_phrase = normalize_fragment(p);
                if code.exact_phrase.is_empty() {
                    return Err(CodeLogError::EmptyPhrase.into());
                }
            }
            if let Some(r) = &patch.interpretation {
                code.rationale = r.trim().to_owned();
            }
            if moved {
                let hint = match &patch.location {
                    Some(loc) => {
                        transcript.validate(loc)?;
                        transcript.canonical(loc)
                    }
                    None => {
                        // Keep the paragraph, let the new wording find its own offsets.
                        let l = &c.location;
                        transcript.span(l.paragraph_start, l.paragraph_end)
                    }
                };
                place_verbatim(&mut code, transcript, Some(&hint), env.integrity);
            }
            if let Some(ctx) = &patch.paragraph_context {
                code.paragraph_context = ctx.clone();
            }
            if !code.integrity.as_ref().is_some_and(|v| v.is_exact()) {
                return Err(RevisionError::IntegrityRequired(integrity_message(&code)));
            }
            code.needs_human = false;
            code.status = status;
            AnalyticObject::Verbatim(code)
        }
        AnalyticObject::Gerund(g) => {
            reject_fields(patch, &["label", "family_id"], "gerund code")?;
            let mut g: GerundCode = g.clone();
            if let Some(label) = &patch.label {
                let label = label.trim();
                let check = check_gerund(label, env.gerund_policy);
                if !check.passes {
                    return Err(RevisionError::NotGerundForm(label.to_owned()));
                }
                g.label = label.to_owned();
                g.gerund_form = true;
            }
            if let Some(f) = &patch.family_id {
                active_family(log, f)?;
                g.family_id = Some(f.clone());
            }
            if patch.accept && !g.gerund_form {
                return Err(RevisionError::NotGerundForm(g.label));
            }
            g.needs_human = !g.gerund_form;
            g.status = status;
            AnalyticObject::Gerund(g)
        }
        AnalyticObject::Family(f) => {
            reject_fields(patch, &["label", "dimension"], "code family")?;
            let mut f = f.clone();
            if let Some(label) = &patch.label {
                let label = label.trim();
                if label.is_empty() {
                    return Err(CodeLogError::EmptyLabel.into());
                }
                if log.family_label_taken(label, Some(&f.id)) {
                    return Err(CodeLogError::DuplicateLabel { kind: "family", label: label.into() }.into());
                }
                f.label = label.to_owned();
            }
            if let Some(d) = patch.dimension {
                f.dimension = d;
            }
            f.status = status;
            AnalyticObject::Family(f)
        }
        AnalyticObject::Theme(t) => {
            reject_fields(patch, &["label", "definition", "dimension"], "theme")?;
            let mut t = t.clone();
            if let Some(label) = &patch.label {
                let label = label.trim();
                if label.is_empty() {
                    return Err(CodeLogError::EmptyLabel.into());
                }
                if log.theme_label_taken(label, Some(&t.id)) {
                    return Err(CodeLogError::DuplicateLabel { kind: "theme", label: label.into() }.into());
                }
                t.label = label.to_owned();
            }
            if let Some(d) = &patch.definition {
                t.definition = d.trim().to_owned();
            }
            if let Some(d) = patch.dimension {
                t.dimension = d;
            }
            t.status = status;
            AnalyticObject::Theme(t)
        }
        AnalyticObject::Comment(c) => {
            return Err(RevisionError::InvalidRevision(format!("comment {} cannot be modified", c.id)))
        }
    };
    Ok(next)
}

/// Applies a concrete action to a log. Used both live and by [`rebuild`].
pub fn replay_action(log: &mut CodeLog, action: &RevisionAction) -> Result<(), RevisionError> {
    let expected = log.version + 1;
    if action.sequence != expected {
        return Err(RevisionError::SequenceGap { expected, found: action.sequence });
    }
    if let (Some(target), Some(before)) = (&action.target_id, &action.before) {
        match log.object(target) {
            Some(current) if &current == before => {}
            Some(_) => {
                return Err(RevisionError::PreconditionReplayFailure(format!(
                    "{target} differs from the recorded before-state of action {}",
                    action.id
                )))
            }
            None => {
                return Err(RevisionError::PreconditionReplayFailure(format!(
                    "{target} is missing for action {}",
                    action.id
                )))
            }
        }
    }
    let fresh: Vec<&AnalyticObject> = match action.kind {
        ActionKind::Insertion | ActionKind::Commenting => action.after.iter().collect(),
        _ => action.replacement.iter().collect(),
    };
    for obj in &fresh {
        if log.contains(obj.id()) {
            return Err(RevisionError::PreconditionReplayFailure(format!(
                "{} already exists",
                obj.id()
            )));
        }
    }

    if let Some(after) = &action.after {
        log.put(after.clone());
        relink(log, action.before.as_ref(), after, None);
    }
    if let Some(rep) = &action.replacement {
        log.put(rep.clone());
        relink(log, None, rep, action.target_id.as_ref());
    }
    log.version = expected;
    Ok(())
}

/// Keeps the gerund ↔ family ↔ theme links consistent after an object changes.
fn relink(log: &mut CodeLog, before: Option<&AnalyticObject>, after: &AnalyticObject, replaced: Option<&ObjectId>) {
    match after {
        AnalyticObject::Gerund(g) => {
            let old_family = match before {
                Some(AnalyticObject::Gerund(b)) => b.family_id.clone(),
                _ => None,
            };
            if old_family != g.family_id {
                if let Some(old) = old_family.and_then(|f| log.families.iter_mut().find(|x| x.id == f)) {
                    old.member_gerund_ids.retain(|m| m != &g.id);
                }
            }
            if let Some(f) = g.family_id.as_ref().and_then(|f| log.families.iter_mut().find(|x| &x.id == f)) {
                if !f.member_gerund_ids.contains(&g.id) {
                    f.member_gerund_ids.push(g.id.clone());
                }
            }
        }
        AnalyticObject::Family(f) if before.is_none() => {
            for gid in &f.member_gerund_ids {
                if let Some(g) = log.gerunds.iter_mut().find(|g| &g.id == gid) {
                    g.family_id = Some(f.id.clone());
                }
            }
            if let Some(old) = replaced {
                for t in &mut log.themes {
                    for fid in &mut t.family_ids {
                        if fid == old {
                            *fid = f.id.clone();
                        }
                    }
                }
            }
        }
        _ => {}
    }
}

/// Event-sourced reconstruction of a log from its baseline and trail.
pub fn rebuild(initial: &CodeLog, trail: &[RevisionAction]) -> Result<CodeLog, RevisionError> {
    let mut log = initial.clone();
    for action in trail {
        replay_action(&mut log, action)?;
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Comments,
    Insertions,
    DeletionsAndRejections,
    Refinements,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Comments, Category::Insertions, Category::DeletionsAndRejections, Category::Refinements];

    pub fn label(self) -> &'static str {
        match self {
            Category::Comments => "Comments",
            Category::Insertions => "Insertions",
            Category::DeletionsAndRejections => "Deletions and rejections",
            Category::Refinements => "Refinements",
        }
    }
}

/// Which summary bucket each action kind counts towards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap(pub BTreeMap<ActionKind, Category>);

impl Default for CategoryMap {
    fn default() -> Self {
        Self(BTreeMap::from([
            (ActionKind::Commenting, Category::Comments),
            (ActionKind::Insertion, Category::Insertions),
            (ActionKind::Deletion, Category::DeletionsAndRejections),
            (ActionKind::Rejection, Category::DeletionsAndRejections),
            (ActionKind::Modification, Category::Refinements),
        ]))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub comments: usize,
    pub insertions: usize,
    pub deletions_and_rejections: usize,
    pub refinements: usize,
    pub total: usize,
}

impl ActionCounts {
    pub fn get(&self, c: Category) -> usize {
        match c {
            Category::Comments => self.comments,
            Category::Insertions => self.insertions,
            Category::DeletionsAndRejections => self.deletions_and_rejections,
            Category::Refinements => self.refinements,
        }
    }

    fn bump(&mut self, c: Category) {
        match c {
            Category::Comments => self.comments += 1,
            Category::Insertions => self.insertions += 1,
            Category::DeletionsAndRejections => self.deletions_and_rejections += 1,
            Category::Refinements => self.refinements += 1,
        }
        self.total += 1;
    }

    /// `(comments, insertions, deletions_and_rejections, refinements, total)`.
    pub fn as_tuple(&self) -> (usize, usize, usize, usize, usize) {
        (self.comments, self.insertions, self.deletions_and_rejections, self.refinements, self.total)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub per_actor: BTreeMap<ActorId, ActionCounts>,
}

impl ActionSummary {
    pub fn actor(&self, actor: &ActorId) -> ActionCounts {
        self.per_actor.get(actor).copied().unwrap_or_default()
    }
}

pub fn summarize(trail: &[RevisionAction], map: &CategoryMap) -> ActionSummary {
    let mut summary = ActionSummary::default();
    for action in trail {
        let counts = summary.per_actor.entry(action.actor_id.clone()).or_default();
        if let Some(c) = map.0.get(&action.kind) {
            counts.bump(*c);
        }
    }
    summary
}
