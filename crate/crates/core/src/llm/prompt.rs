//! Phase prompt templates.
//!
//! Templates use `{name}` placeholders. Rendering fails on any placeholder
//! without a binding, so a prompt can never reach the model half-filled.
//! The wording is written for this engine; only the response formats are
//! load-bearing, because the parsers in [`super::parse`] depend on them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::phase::Phase;

pub type Bindings = BTreeMap<String, String>;

/// Builds bindings from `(name, value)` pairs.
pub fn bindings<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Setup,
    P1Narrative,
    P1Segment,
    P2Extract,
    P2FormatReminder,
    P2Repair,
    P3Map,
    P4Themes,
    P5Review,
    P6Define,
    Reflexive,
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub phase: Phase,
    pub text: &'static str,
}

impl PromptTemplate {
    pub fn get(id: TemplateId) -> PromptTemplate {
        let (phase, text) = match id {
            TemplateId::Setup => (Phase::Setup, SETUP),
            TemplateId::P1Narrative => (Phase::P1Familiarization, P1_NARRATIVE),
            TemplateId::P1Segment => (Phase::P1Familiarization, P1_SEGMENT),
            TemplateId::P2Extract => (Phase::P2ExactKeyword, P2_EXTRACT),
            TemplateId::P2FormatReminder => (Phase::P2ExactKeyword, P2_FORMAT_REMINDER),
            TemplateId::P2Repair => (Phase::P2ExactKeyword, P2_REPAIR),
            TemplateId::P3Map => (Phase::P3DescriptivePattern, P3_MAP),
            TemplateId::P4Themes => (Phase::P4ThemeDevelopment, P4_THEMES),
            TemplateId::P5Review => (Phase::P5ThemeReview, P5_REVIEW),
            TemplateId::P6Define => (Phase::P6DefineReport, P6_DEFINE),
            TemplateId::Reflexive => (Phase::Setup, REFLEXIVE),
        };
        PromptTemplate { id, phase, text }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for (name, _) in scan(self.text) {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, LlmError> {
        render_text(self.text, bindings)
    }
}

/// Yields `(name, byte range of "{name}")` for every placeholder.
fn scan(text: &str) -> Vec<(&str, std::ops::Range<usize>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let rest = &text[i + 1..];
            let len = rest.bytes().take_while(|b| b.is_ascii_lowercase() || *b == b'_').count();
            if len > 0 && rest.as_bytes().get(len) == Some(&b'}') {
                out.push((&rest[..len], i..i + len + 2));
                i += len + 2;
                continue;
            }
        }
        i += 1;
    }
    out
}

pub fn render_text(text: &str, bindings: &Bindings) -> Result<String, LlmError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (name, range) in scan(text) {
        let value = bindings.get(name).ok_or_else(|| LlmError::UnboundPlaceholder(name.to_owned()))?;
        out.push_str(&text[last..range.start]);
        out.push_str(value);
        last = range.end;
    }
    out.push_str(&text[last..]);
    Ok(out)
}

const SETUP: &str = "\
We are starting an inductive thematic analysis.
Research question: {research_question}
Work proceeds in six phases. Before each phase begins, stop and wait for the
researcher to authorise it. Ask whether to stay at exact keyword coding or to
continue into descriptive (gerund) coding.";

const P1_NARRATIVE: &str = "\
Research question: {research_question}

Read the whole transcript below and write one narrative summary of it in a few
paragraphs. Stay close to what participants say and do not propose codes yet.

Transcript:
{text_segment}";

const P1_SEGMENT: &str = "\
Research question: {research_question}

Summarise Page {page_number} of the transcript paragraph by paragraph, adding a
short interpretive note for each paragraph.

Page {page_number}:
{text_segment}";

const P2_EXTRACT: &str = "\
Research question: {research_question}

From the text of Page {page_number} below, extract only the most relevant
inductively emerging codes. Do not create a code for every observation.
For each code give a short code phrase, the exact sentence or passage it comes
from, copied word for word, and the page marker. Answer in this format:

1. Code: <short code phrase>
   Passage: \"<exact sentence from the text>\"
   Page: {page_number}
   Rationale: <one sentence on why it matters>

Answer NONE if nothing on this page is relevant.

Page {page_number}:
{text_segment}";

const P2_FORMAT_REMINDER: &str = "\
Your previous answer for Page {page_number} could not be read. Reply again using
only numbered entries with the lines Code:, Passage:, Page: and Rationale:, or
the single word NONE.

Research question: {research_question}

Page {page_number}:
{text_segment}";

const P2_REPAIR: &str = "\
The passage below was offered as an exact quotation from Page {page_number},
but it does not appear word for word in the text.

{prior_codes}

Copy the participant's wording exactly as it appears on the page, keeping
spelling, contractions, punctuation and capitals. Reply with a single entry:

1. Code: <short code phrase>
   Passage: \"<exact sentence from the text>\"
   Page: {page_number}
   Rationale: <one sentence>

Page {page_number}:
{text_segment}";

const P3_MAP: &str = "\
Research question: {research_question}

Turn each verbatim code below into a descriptive code phrased as an action or
process that starts with a gerund (an -ing word), then group the descriptive
codes into code families. Answer with one entry per verbatim code:

1. Verbatim: \"<verbatim code exactly as listed>\"
   Gerund: <gerund-based descriptive code>
   Family: <code family>

Verbatim codes:
{prior_codes}";

const P4_THEMES: &str = "\
Research question: {research_question}

Cluster the code families below into candidate themes. Tag each theme as
structural or personal where that distinction applies. Answer with:

1. Theme: <theme name>
   Families: <family>; <family>
   Dimension: structural | personal | unassigned
   Definition: <one or two sentences>

Code families:
{prior_codes}";

const P5_REVIEW: &str = "\
Research question: {research_question}

Review the candidate theme below against its supporting quotations. Say
whether the evidence is sufficient, where it is thin, and whether the theme
should be split, merged or renamed.

{prior_codes}";

const P6_DEFINE: &str = "\
Research question: {research_question}

Write a final definition for the theme below: what it captures, what it does
not, and how it answers the research question.

{prior_codes}";

const REFLEXIVE: &str = "\
Research question: {research_question}

The researcher describes their positionality as: {positionality}

Ask one reflexive question that helps the researcher examine how this position
may shape the way they read and code the transcript.";
