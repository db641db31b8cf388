//! Transcript coverage audit: which paragraphs have at least one coded extract.
//!
//! Only verbatim codes count. Tombstoned codes are excluded by default so a
//! rejected interpretation never satisfies coverage on its own.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codelog::{CodeStatus, VerbatimCode};
use crate::ids::ObjectId;
use crate::phase::Phase;
use crate::transcript::{char_slice, char_len, Transcript};

/// How many characters of each uncoded paragraph the gap prompt quotes.
pub const GAP_SNIPPET_CHARS: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoverageError {
    #[error("code {code} references transcript {found}, expected {expected}")]
    ForeignCode { code: ObjectId, expected: String, found: String },
}

impl CoverageError {
    pub fn name(&self) -> &'static str {
        "ForeignCode"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_paragraph: BTreeMap<usize, Vec<ObjectId>>,
    pub uncoded: Vec<usize>,
    pub coverage_ratio: f64,
    pub generated_at_phase: Phase,
}

impl CoverageReport {
    pub fn covered(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_paragraph.iter().filter(|(_, ids)| !ids.is_empty()).map(|(p, _)| *p)
    }

    pub fn covered_count(&self) -> usize {
        self.covered().count()
    }

    pub fn total(&self) -> usize {
        self.per_paragraph.len()
    }

    pub fn is_complete(&self) -> bool {
        self.uncoded.is_empty()
    }

    /// One line per paragraph: index, number of covering codes and their ids.
    pub fn table(&self) -> String {
        let mut out = String::from("paragraph  codes  ids\n");
        for (p, ids) in &self.per_paragraph {
            let list: Vec<&str> = ids.iter().map(|i| i.as_str()).collect();
            let shown = if list.is_empty() { "(uncoded)".to_owned() } else { list.join(", ") };
            out.push_str(&format!("{p:>9}  {:>5}  {shown}\n", ids.len()));
        }
        out.push_str(&format!(
            "covered {}/{} ({:.1}%)\n",
            self.covered_count(),
            self.total(),
            self.coverage_ratio * 100.0
        ));
        out
    }
}

pub fn default_statuses() -> BTreeSet<CodeStatus> {
    [
        CodeStatus::AiProposed,
        CodeStatus::Accepted,
        CodeStatus::Modified,
        CodeStatus::HumanInserted,
    ]
    .into_iter()
    .collect()
}

pub fn audit<'a>(
    transcript: &Transcript,
    codes: impl IntoIterator<Item = &'a VerbatimCode>,
    include_statuses: &BTreeSet<CodeStatus>,
    phase: Phase,
) -> Result<CoverageReport, CoverageError> {
    let n = transcript.paragraph_count();
    let mut per_paragraph: BTreeMap<usize, Vec<ObjectId>> = (1..=n).map(|p| (p, Vec::new())).collect();
    for code in codes {
        if code.location.transcript_id != transcript.id {
            return Err(CoverageError::ForeignCode {
                code: code.id.clone(),
                expected: transcript.id.to_string(),
                found: code.location.transcript_id.to_string(),
            });
        }
        if !include_statuses.contains(&code.status) {
            continue;
        }
        for p in code.location.paragraphs() {
            if let Some(ids) = per_paragraph.get_mut(&p) {
                ids.push(code.id.clone());
            }
        }
    }
    let uncoded: Vec<usize> =
        per_paragraph.iter().filter(|(_, ids)| ids.is_empty()).map(|(p, _)| *p).collect();
    let coverage_ratio = if n == 0 { 0.0 } else { (n - uncoded.len()) as f64 / n as f64 };
    Ok(CoverageReport { per_paragraph, uncoded, coverage_ratio, generated_at_phase: phase })
}

/// Gap list for the researcher or for re-prompting the model.
pub fn coverage_gaps_prompt(report: &CoverageReport, transcript: &Transcript) -> String {
    if report.uncoded.is_empty() {
        return format!(
            "Full coverage: all {} paragraphs have at least one coded extract.",
            report.total()
        );
    }
    let mut out = format!(
        "{} of {} paragraphs have no coded extract yet:\n",
        report.uncoded.len(),
        report.total()
    );
    for p in &report.uncoded {
        let text = transcript.paragraph(*p).map(|para| para.text.as_str()).unwrap_or("");
        let snippet = if char_len(text) > GAP_SNIPPET_CHARS {
            format!("{}…", char_slice(text, 0, GAP_SNIPPET_CHARS))
        } else {
            text.to_owned()
        };
        out.push_str(&format!("- ¶{p} (page {}): \"{snippet}\"\n", transcript.page_of(*p)));
    }
    out
}
