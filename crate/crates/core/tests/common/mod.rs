//! Fixtures shared by the integration tests: two transcripts, a scripted
//! mock model for each, and helpers that drive a session through its phases.
#![allow(dead_code)]

pub mod coders;
pub mod criteria;
pub mod oracles;

use chrono::{DateTime, Duration, TimeZone, Utc};
use thematic_core::codelog::Dimension;
use thematic_core::llm::parse::{
    emit_code_entries, emit_gerund_mappings, emit_theme_proposals, CodeEntry, GerundMapping, ThemeProposal,
};
use thematic_core::llm::{ChatRequest, Gateway, LlmConfig, MockBackend, TemplateId};
use thematic_core::workflow::{Approval, Command, Outcome};
use thematic_core::{AnalysisSettings, CodingMode, Ctx, Phase, Session, Transcript};

pub const FGD_TITLE: &str = "FGD";
pub const FGD_QUESTION: &str = "How do student-teachers experience their lecturers' teaching and assessment?";
pub const FGD_TEXT: &str = "\
Student-Teacher 1: Yes. Action Research. It didn't go far — time was a big issue.

Student-Teacher 2: Science 3 also wasn't okay. The lecturer insisted we buy his handout. If you didn't purchase it, you risked failing. Teaching itself wasn't emphasized.

Student-Teacher 3: Yes, in Music. The lecturer made us do activities but then criticized us, saying we hadn't done anything. That discouraged us. Many of us lost motivation.

Student-Teacher 4: Introduction to English II wasn't good either. The lecturer wasn't grounded in the content. He would come, give quizzes, but when teaching, he didn't explain well. We didn't get the content.
";

/// The four verbatim phrases of the focus-group fixture, one per paragraph.
pub const FGD_PHRASES: [&str; 4] = [
    "It didn't go far — time was a big issue.",
    "The lecturer insisted we buy his handout. If you didn't purchase it, you risked failing.",
    "That discouraged us. Many of us lost motivation.",
    "The lecturer wasn't grounded in the content. He would come, give quizzes, but when teaching, he didn't explain well.",
];

/// The human code that closes the coverage gap the model leaves in paragraph 4.
pub const FGD_GAP_PHRASE: &str = "The lecturer wasn't grounded in the content.";

pub const INTERVIEW_TITLE: &str = "Lecturer interview";
pub const INTERVIEW_QUESTION: &str = "How are teachers deployed relative to their specialization, and with what effects?";
pub const INTERVIEW_TEXT: &str = "\
Interviewer: Tell me about the subjects you teach at the college.

Charlie: I was trained in mathematics, but I was posted to teach general science. The ones I teach are not really challenging. I would prefer to teach at a higher level.

Charlie: When you specialize in a particular area, you're more comfortable there. I asked to be moved back to mathematics, but nothing changed.

Charlie: Every lesson outside my area needs new notes. That takes extra time and effort. I stay late most evenings.

Charlie: I used the knowledge and experience I had from my own training to adjust my lessons.

Charlie: The students ask difficult questions. They challenge me to prepare thoroughly.

Charlie: In the colleges of education there is little research support. It's easy to remain stagnant there.

Charlie: The posting system does not look at what we studied. That indicates a problem with how teachers are allocated.

Charlie: The ministry should match postings to training, starting with the mathematics departments.
";

pub const STAGNANT_SOURCE: &str = "It's easy to remain stagnant there.";
pub const STAGNANT_PARAPHRASE: &str = "it is easy to remain stagnant there";

/// One code the mock model proposes: found on the page whose text contains
/// `anchor`, with `repair` as its answer to a repair prompt.
#[derive(Debug, Clone)]
pub struct ScriptedCode {
    pub anchor: &'static str,
    pub code: &'static str,
    pub passage: &'static str,
    pub rationale: &'static str,
    pub repair: Option<&'static str>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub title: &'static str,
    pub text: &'static str,
    pub question: &'static str,
    pub page_size: usize,
    pub codes: Vec<ScriptedCode>,
    pub mappings: Vec<GerundMapping>,
    pub themes: Vec<ThemeProposal>,
}

fn code(anchor: &'static str, code: &'static str, passage: &'static str, rationale: &'static str) -> ScriptedCode {
    ScriptedCode { anchor, code, passage, rationale, repair: None }
}

pub fn mapping(verbatim: &str, gerund: &str, family: &str) -> GerundMapping {
    GerundMapping { verbatim: verbatim.into(), gerund: gerund.into(), family: family.into(), unmatched: false }
}

pub fn theme(label: &str, families: &[&str], dimension: Dimension, definition: &str) -> ThemeProposal {
    ThemeProposal {
        label: label.into(),
        families: families.iter().map(|f| f.to_string()).collect(),
        dimension,
        definition: definition.into(),
    }
}

/// Focus-group fixture. The model codes paragraphs 1-3 only.
pub fn fgd() -> Fixture {
    Fixture {
        title: FGD_TITLE,
        text: FGD_TEXT,
        question: FGD_QUESTION,
        page_size: 10,
        codes: vec![
            code("Action Research", "Time pressure", FGD_PHRASES[0], "Course delivery cut short by the timetable."),
            code(
                "buy his handout",
                "Handout pressure",
                FGD_PHRASES[1],
                "Points to coercive assessment and economic pressure; signals ethical concern.",
            ),
            code("in Music", "Lost motivation", FGD_PHRASES[2], "Negative feedback lowered the students' motivation."),
        ],
        mappings: vec![
            mapping(FGD_PHRASES[0], "Running out of teaching time", "Course delivery"),
            mapping(FGD_PHRASES[1], "Experiencing coercive assessment", "Assessment practices"),
            mapping(FGD_PHRASES[2], "Losing motivation after criticism", "Learner morale"),
            mapping(FGD_GAP_PHRASE, "Receiving superficial instruction", "Course delivery"),
        ],
        themes: vec![
            theme(
                "Institutional shortfalls in teaching",
                &["Course delivery", "Assessment practices"],
                Dimension::Structural,
                "Timetables, assessment rules and lecturer preparation that limit what students learn.",
            ),
            theme(
                "Eroded learner motivation",
                &["Learner morale"],
                Dimension::Personal,
                "How students' motivation responds to the way lecturers treat them.",
            ),
        ],
    }
}

/// Interview fixture on two pages. The model paraphrases the stagnation
/// sentence and does not fix it when asked to repair.
pub fn interview() -> Fixture {
    let mut stagnant = code(
        "little research support",
        "Stagnation",
        STAGNANT_PARAPHRASE,
        "Comparing institutions: the college offers little room to grow.",
    );
    stagnant.repair = Some(STAGNANT_PARAPHRASE);
    Fixture {
        title: INTERVIEW_TITLE,
        text: INTERVIEW_TEXT,
        question: INTERVIEW_QUESTION,
        page_size: 5,
        codes: vec![
            code(
                "not really challenging",
                "Under-stimulation",
                "The ones I teach are not really challenging.",
                "Indicates a structural issue in the education sector.",
            ),
            code(
                "specialize in a particular area",
                "Specialization comfort",
                "When you specialize in a particular area, you're more comfortable there.",
                "Shows a preference for teaching within one's specialization.",
            ),
            code(
                "extra time and effort",
                "Extra preparation",
                "That takes extra time and effort.",
                "Describes extra preparation time.",
            ),
            code(
                "knowledge and experience",
                "Prior knowledge",
                "I used the knowledge and experience I had from my own training",
                "Describes drawing on prior knowledge.",
            ),
            stagnant,
            code(
                "prepare thoroughly",
                "Student challenge",
                "They challenge me to prepare thoroughly.",
                "Students push the teacher to prepare.",
            ),
            code(
                "posting system",
                "Misallocation",
                "That indicates a problem with how teachers are allocated.",
                "Highlights epistemological disconnects.",
            ),
            code(
                "match postings to training",
                "Reform",
                "The ministry should match postings to training",
                "Suggests reform of the posting process.",
            ),
        ],
        mappings: vec![
            mapping(
                "The ones I teach are not really challenging.",
                "Experiencing lack of stimulation",
                "Professional (dis)engagement",
            ),
            mapping(
                "When you specialize in a particular area, you're more comfortable there.",
                "Valuing comfort in one's specialization",
                "Professional identity & expertise",
            ),
            mapping("That takes extra time and effort.", "Undertaking extra preparatory labour", "Workload pressures"),
            mapping(
                "I used the knowledge and experience I had from my own training",
                "Drawing on lived experience",
                "Professional identity & expertise",
            ),
            mapping(STAGNANT_PARAPHRASE, "Stagnating in the college system", "Systemic allocation"),
            mapping(
                "They challenge me to prepare thoroughly.",
                "Being challenged by students",
                "Professional (dis)engagement",
            ),
            mapping(
                "That indicates a problem with how teachers are allocated.",
                "Observing systemic misallocation",
                "Systemic allocation",
            ),
            mapping(
                "The ministry should match postings to training",
                "Suggesting practical, hierarchical reform",
                "Systemic allocation",
            ),
        ],
        themes: vec![
            theme(
                "Misallocation as a structural constraint",
                &["Systemic allocation", "Workload pressures"],
                Dimension::Structural,
                "Deployment that ignores training and loads teachers with extra work.",
            ),
            theme(
                "Professional identity under strain",
                &["Professional identity & expertise", "Professional (dis)engagement"],
                Dimension::Personal,
                "How teachers hold on to their expertise when posted outside it.",
            ),
        ],
    }
}

impl Fixture {
    pub fn transcript(&self) -> Transcript {
        Transcript::ingest(self.text, self.title, self.page_size).expect("fixture transcript ingests")
    }

    pub fn settings(&self) -> AnalysisSettings {
        AnalysisSettings { page_size: self.page_size, ..AnalysisSettings::default() }
    }

    /// Answers every prompt the phases send for this fixture.
    pub fn respond(&self, req: &ChatRequest) -> Option<String> {
        let t = self.transcript();
        let page_of_anchor = |anchor: &str| {
            t.paragraphs.iter().find(|p| p.text.contains(anchor)).map(|p| t.page_of(p.index))
        };
        let text = match req.template {
            TemplateId::Setup => "Ready.".to_owned(),
            TemplateId::P1Narrative => format!(
                "The {} covers {} paragraphs. Participants describe how their courses were run and how that affected them.",
                self.title,
                t.paragraph_count()
            ),
            TemplateId::P1Segment => {
                let page = t.pages().into_iter().find(|p| {
                    t.paragraph(p.first_paragraph).is_some_and(|para| req.prompt.contains(&para.text))
                })?;
                format!(
                    "Page {}: paragraphs {} to {} in the participants' own words.",
                    page.number, page.first_paragraph, page.last_paragraph
                )
            }
            TemplateId::P2Extract | TemplateId::P2FormatReminder => {
                let entries: Vec<CodeEntry> = self
                    .codes
                    .iter()
                    .filter(|c| req.prompt.contains(c.anchor))
                    .map(|c| CodeEntry {
                        code: c.code.into(),
                        passage: c.passage.into(),
                        page: page_of_anchor(c.anchor).unwrap_or(1),
                        rationale: c.rationale.into(),
                    })
                    .collect();
                emit_code_entries(&entries)
            }
            TemplateId::P2Repair => {
                let c = self.codes.iter().find(|c| req.prompt.contains(&format!("\"{}\"", c.passage)))?;
                emit_code_entries(&[CodeEntry {
                    code: c.code.into(),
                    passage: c.repair.unwrap_or(c.passage).into(),
                    page: page_of_anchor(c.anchor).unwrap_or(1),
                    rationale: c.rationale.into(),
                }])
            }
            TemplateId::P3Map => {
                let listed: Vec<GerundMapping> = self
                    .mappings
                    .iter()
                    .filter(|m| req.prompt.contains(&format!("\"{}\"", m.verbatim)))
                    .cloned()
                    .collect();
                emit_gerund_mappings(&listed)
            }
            TemplateId::P4Themes => emit_theme_proposals(&self.themes),
            TemplateId::P5Review => {
                let label = theme_label(&req.prompt)?;
                format!("The quotations support \"{label}\". The evidence is sufficient; keep the theme as it is.")
            }
            TemplateId::P6Define => {
                let label = theme_label(&req.prompt)?;
                format!("{label}: the pattern across the coded passages, bounded by the families it groups.")
            }
            TemplateId::Reflexive => {
                "How might your own training shape which passages you notice first?".to_owned()
            }
        };
        Some(text)
    }

    pub fn gateway(&self) -> Gateway {
        let me = self.clone();
        Gateway::mock(MockBackend::scripted(move |req| me.respond(req)))
    }
}

fn theme_label(prompt: &str) -> Option<String> {
    prompt.lines().find_map(|l| l.strip_prefix("Theme: ")).map(str::to_owned)
}

/// Deterministic timestamps: one minute apart, starting from a fixed instant.
pub struct Clock {
    next: DateTime<Utc>,
}

impl Default for Clock {
    fn default() -> Self {
        Self { next: Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap() }
    }
}

impl Clock {
    pub fn ctx(&mut self, actor: &str) -> Ctx {
        let at = self.next;
        self.next += Duration::minutes(1);
        Ctx::new(actor, at)
    }
}

/// Runs a session while keeping its clock and gateway.
pub struct Driver {
    pub session: Session,
    pub gateway: Gateway,
    pub clock: Clock,
}

pub const LEAD: &str = "lead";

impl Driver {
    pub fn new(fx: &Fixture, mode: CodingMode) -> Self {
        Self::with_gateway(fx, mode, fx.gateway())
    }

    pub fn with_gateway(fx: &Fixture, mode: CodingMode, gateway: Gateway) -> Self {
        let mut clock = Clock::default();
        let ctx = clock.ctx(LEAD);
        let session = Session::create(fx.question, mode, LlmConfig::default(), fx.settings(), &ctx)
            .expect("session creates");
        let mut d = Self { session, gateway, clock };
        d.run(LEAD, Command::LoadTranscript { title: fx.title.into(), text: fx.text.into() });
        d
    }

    pub fn try_run(&mut self, actor: &str, cmd: Command) -> Result<Outcome, thematic_core::EngineError> {
        let ctx = self.clock.ctx(actor);
        self.session.execute(cmd, &ctx, &self.gateway)
    }

    pub fn run(&mut self, actor: &str, cmd: Command) -> Outcome {
        let label = format!("{cmd:?}");
        self.try_run(actor, cmd).unwrap_or_else(|e| panic!("{label} failed: {} ({e})", e.name()))
    }

    pub fn advance(&mut self, to: Phase) -> Outcome {
        self.run(LEAD, Command::Advance { approval: Some(Approval { actor: LEAD.into(), to }) })
    }

    /// Advances into `to` and runs it.
    pub fn step(&mut self, to: Phase) -> Outcome {
        self.advance(to);
        self.run(LEAD, Command::RunPhase)
    }

    /// Setup through P4, so there are codes, gerunds, families and themes.
    pub fn through_p4(&mut self) {
        self.step(Phase::P1Familiarization);
        self.step(Phase::P2ExactKeyword);
        self.step(Phase::P3DescriptivePattern);
        self.step(Phase::P4ThemeDevelopment);
    }
}
