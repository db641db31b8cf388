//! Three scripted coders, each reviewing the model's output in their own
//! session. The scripts mirror the kinds of revisions each coder made:
//! heavy commenting with a few substitutions (coder 1), rationale and label
//! refinements plus inserted codes and quotes (coder 2), and a categorical
//! correction with targeted label edits (coder 3).

use thematic_core::codelog::{Dimension, MemoKind};
use thematic_core::revision::{NewObject, Patch};
use thematic_core::workflow::Command;
use thematic_core::{CodingMode, ObjectId, Phase, RevisionRequest, Session};

use super::{fgd, interview, Driver, FGD_GAP_PHRASE, LEAD, STAGNANT_PARAPHRASE, STAGNANT_SOURCE};

pub const CODER_1: &str = "coder-1";
pub const CODER_2: &str = "coder-2";
pub const CODER_3: &str = "coder-3";

pub fn verbatim_id(s: &Session, phrase: &str) -> ObjectId {
    s.codes
        .active_verbatim()
        .find(|c| c.exact_phrase == phrase)
        .unwrap_or_else(|| panic!("no active verbatim code `{phrase}`"))
        .id
        .clone()
}

pub fn gerund_id(s: &Session, label: &str) -> ObjectId {
    s.codes
        .active_gerunds()
        .find(|g| g.label == label)
        .unwrap_or_else(|| panic!("no active gerund `{label}`"))
        .id
        .clone()
}

pub fn family_id(s: &Session, label: &str) -> ObjectId {
    s.codes.find_family_by_label(label).unwrap_or_else(|| panic!("no family `{label}`")).id.clone()
}

pub fn theme_id(s: &Session, label: &str) -> ObjectId {
    s.codes
        .active_themes()
        .find(|t| t.label == label)
        .unwrap_or_else(|| panic!("no active theme `{label}`"))
        .id
        .clone()
}

fn first_memo(s: &Session, kind: MemoKind) -> ObjectId {
    s.codes.memos.iter().find(|m| m.kind == kind).expect("memo exists").id.clone()
}

fn comment(target_id: ObjectId, body: &str) -> RevisionRequest {
    RevisionRequest::Commenting { target_id, body: body.into() }
}

fn reinterpret(target_id: ObjectId, text: &str) -> RevisionRequest {
    RevisionRequest::Modification {
        target_id,
        patch: Patch { interpretation: Some(text.into()), ..Patch::default() },
        rationale: String::new(),
    }
}

fn relabel(target_id: ObjectId, label: &str, why: &str) -> RevisionRequest {
    RevisionRequest::Modification {
        target_id,
        patch: Patch { label: Some(label.into()), ..Patch::default() },
        rationale: why.into(),
    }
}

pub fn insert_quote(phrase: &str, why: &str) -> RevisionRequest {
    RevisionRequest::Insertion {
        object: NewObject::Verbatim { phrase: phrase.into(), location: None, rationale: why.into() },
        rationale: why.into(),
        exempt_integrity: false,
    }
}

/// The focus-group session after P4, with the paragraph-4 gap closed by hand.
pub fn fgd_base() -> Driver {
    let mut d = Driver::new(&fgd(), CodingMode::ExactPlusDescriptive);
    d.step(Phase::P1Familiarization);
    d.step(Phase::P2ExactKeyword);
    fill_fgd_gap(&mut d);
    d.step(Phase::P3DescriptivePattern);
    d.step(Phase::P4ThemeDevelopment);
    d
}

pub fn fill_fgd_gap(d: &mut Driver) {
    d.run(LEAD, Command::AuditCoverage { include_statuses: None });
    d.run(
        LEAD,
        Command::Revise {
            request: insert_quote(FGD_GAP_PHRASE, "Weak subject mastery; the gap the coverage audit reported."),
        },
    );
}

/// The interview session after P4.
pub fn interview_base() -> Driver {
    let mut d = Driver::new(&interview(), CodingMode::ExactPlusDescriptive);
    d.through_p4();
    d
}

/// A coder's revisions, built against the current session state one at a time.
pub type Step = Box<dyn Fn(&Session) -> RevisionRequest>;

pub fn coder_1_script() -> Vec<Step> {
    let handout = "The lecturer insisted we buy his handout. If you didn't purchase it, you risked failing.";
    let time = "It didn't go far — time was a big issue.";
    let motivation = "That discouraged us. Many of us lost motivation.";
    vec![
        Box::new(|s| comment(first_memo(s, MemoKind::PhaseSummary), "A useful overview before coding starts.")),
        Box::new(move |s| comment(verbatim_id(s, handout), "Too long as a code, but it points to the right gerund.")),
        Box::new(|s| {
            RevisionRequest::Insertion {
                object: NewObject::Gerund {
                    label: "Buying the lecturer's handout to avoid failing".into(),
                    source_verbatim_ids: vec![verbatim_id(s, handout)],
                    family_id: Some(family_id(s, "Assessment practices")),
                },
                rationale: "Closer to what the students actually said.".into(),
                exempt_integrity: false,
            }
        }),
        Box::new(move |s| reinterpret(verbatim_id(s, handout), "Points to coercive assessment and economic pressure; unprofessional.")),
        Box::new(move |s| comment(verbatim_id(s, handout), "Unprofessional is the more precise word here.")),
        Box::new(move |s| reinterpret(verbatim_id(s, time), "Timetable pressure cut the course short.")),
        Box::new(move |s| comment(verbatim_id(s, time), "Keep the rationale short and plain.")),
        Box::new(move |s| reinterpret(verbatim_id(s, motivation), "Criticism without guidance lowered motivation.")),
        Box::new(move |s| comment(verbatim_id(s, motivation), "This keyword belongs to two sentences.")),
        Box::new(|s| {
            RevisionRequest::Deletion {
                target_id: gerund_id(s, "Receiving superficial instruction"),
                rationale: "Lost the context of the passage; replaced with my own code.".into(),
                replacement: Some(NewObject::Gerund {
                    label: "Receiving content without explanation".into(),
                    source_verbatim_ids: vec![],
                    family_id: None,
                }),
            }
        }),
        Box::new(|s| comment(gerund_id(s, "Experiencing coercive assessment"), "Good gerund.")),
        Box::new(|s| comment(gerund_id(s, "Losing motivation after criticism"), "Matches my reading.")),
        Box::new(|s| comment(family_id(s, "Course delivery"), "Family label is clear.")),
        Box::new(|s| comment(theme_id(s, "Institutional shortfalls in teaching"), "Structural framing works.")),
        Box::new(|s| comment(theme_id(s, "Eroded learner motivation"), "Personal dimension is right.")),
    ]
}

pub fn coder_2_script() -> Vec<Step> {
    vec![
        Box::new(|s| reinterpret(verbatim_id(s, "That takes extra time and effort."), "Emotional labor and professional strain.")),
        Box::new(|s| {
            reinterpret(
                verbatim_id(s, "I used the knowledge and experience I had from my own training"),
                "Improved teaching practices based on lived experience; adaptive professionalism.",
            )
        }),
        Box::new(|s| {
            reinterpret(
                verbatim_id(s, "The ones I teach are not really challenging."),
                "Identifies a structural bottleneck in teacher education.",
            )
        }),
        Box::new(|s| reinterpret(verbatim_id(s, "They challenge me to prepare thoroughly."), "Signals reciprocal learning.")),
        Box::new(|s| RevisionRequest::Modification {
            target_id: verbatim_id(s, STAGNANT_PARAPHRASE),
            patch: Patch { exact_phrase: Some(STAGNANT_SOURCE.into()), ..Patch::default() },
            rationale: "Use the participant's exact wording.".into(),
        }),
        Box::new(|s| {
            reinterpret(
                verbatim_id(s, STAGNANT_SOURCE),
                "A condition that constrains professional development.",
            )
        }),
        Box::new(|s| {
            reinterpret(
                verbatim_id(s, "That indicates a problem with how teachers are allocated."),
                "Identifies an epistemological disjuncture.",
            )
        }),
        Box::new(|s| {
            RevisionRequest::Insertion {
                object: NewObject::Gerund {
                    label: "Recognizing systemic gaps in teacher preparation".into(),
                    source_verbatim_ids: vec![
                        verbatim_id(s, "That indicates a problem with how teachers are allocated."),
                        verbatim_id(s, "The ministry should match postings to training"),
                    ],
                    family_id: Some(family_id(s, "Systemic allocation")),
                },
                rationale: "The model did not capture the systemic concern.".into(),
                exempt_integrity: false,
            }
        }),
        Box::new(|_| insert_quote("I stay late most evenings.", "Grounds the workload code in the participant's words.")),
        Box::new(|_| {
            insert_quote(
                "I asked to be moved back to mathematics, but nothing changed.",
                "Shows the request for a matching posting.",
            )
        }),
        Box::new(|_| insert_quote("The students ask difficult questions.", "Grounds the reciprocal learning reading.")),
        Box::new(|s| relabel(gerund_id(s, "Being challenged by students"), "Learning reciprocally with students", "")),
        Box::new(|s| {
            relabel(gerund_id(s, "Drawing on lived experience"), "Adapting practice through lived experience", "")
        }),
        Box::new(|s| RevisionRequest::Modification {
            target_id: theme_id(s, "Misallocation as a structural constraint"),
            patch: Patch {
                definition: Some(
                    "A structural bottleneck: deployment ignores training and adds emotional and professional strain."
                        .into(),
                ),
                ..Patch::default()
            },
            rationale: String::new(),
        }),
        Box::new(|s| RevisionRequest::Deletion {
            target_id: gerund_id(s, "Stagnating in the college system"),
            rationale: "Covered by the reframed rationale on the verbatim code.".into(),
            replacement: None,
        }),
    ]
}

pub fn coder_3_script() -> Vec<Step> {
    vec![
        Box::new(|s| RevisionRequest::Rejection {
            target_id: family_id(s, "Professional (dis)engagement"),
            rationale: "Disengagement implies withdrawing from duties; the participant is still teaching.".into(),
            replacement: Some(NewObject::Family {
                label: "Professional challenges".into(),
                member_gerund_ids: vec![],
                dimension: Dimension::Unassigned,
            }),
        }),
        Box::new(|s| {
            comment(
                family_id(s, "Professional challenges"),
                "This is a professional challenge, not a withdrawal from work.",
            )
        }),
        Box::new(|s| {
            relabel(
                gerund_id(s, "Valuing comfort in one's specialization"),
                "Insisting on preferred area of specialization",
                "An active demand for alignment, not mere comfort.",
            )
        }),
        Box::new(|s| {
            relabel(
                gerund_id(s, "Observing systemic misallocation"),
                "Ensuing outcomes of the current allocation process",
                "Links the allocation process to its results.",
            )
        }),
        Box::new(|s| {
            relabel(
                gerund_id(s, "Undertaking extra preparatory labour"),
                "Shouldering additional workload and professional strain",
                "Includes the mental and professional stress.",
            )
        }),
        Box::new(|s| {
            relabel(
                gerund_id(s, "Suggesting practical, hierarchical reform"),
                "Suggesting practical reform",
                "Simpler label.",
            )
        }),
        Box::new(|s| {
            relabel(
                theme_id(s, "Professional identity under strain"),
                "Professional identity under challenge",
                "Follows the family correction.",
            )
        }),
        Box::new(|s| {
            comment(
                verbatim_id(s, "The ministry should match postings to training"),
                "Since the issue goes beyond just mathematics.",
            )
        }),
    ]
}

/// Runs a script as `actor`, calling `after_each` with the session after
/// every action.
pub fn run_script(d: &mut Driver, actor: &str, script: Vec<Step>, after_each: &mut dyn FnMut(&Session)) {
    for step in script {
        let request = step(&d.session);
        d.run(actor, Command::Revise { request });
        after_each(&d.session);
    }
}

/// The three coder sessions, each with its coder's script applied.
pub fn coder_sessions(after_each: &mut dyn FnMut(&Session)) -> Vec<(&'static str, Driver)> {
    let mut c1 = fgd_base();
    run_script(&mut c1, CODER_1, coder_1_script(), after_each);
    let mut c2 = interview_base();
    run_script(&mut c2, CODER_2, coder_2_script(), after_each);
    let mut c3 = interview_base();
    run_script(&mut c3, CODER_3, coder_3_script(), after_each);
    vec![(CODER_1, c1), (CODER_2, c2), (CODER_3, c3)]
}
