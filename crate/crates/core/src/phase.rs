//! The six analysis phases and the consent-gated position of a session.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::ActorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    #[serde(rename = "P1_Familiarization")]
    P1Familiarization,
    #[serde(rename = "P2_ExactKeyword")]
    P2ExactKeyword,
    #[serde(rename = "P3_DescriptivePattern")]
    P3DescriptivePattern,
    #[serde(rename = "P4_ThemeDevelopment")]
    P4ThemeDevelopment,
    #[serde(rename = "P5_ThemeReview")]
    P5ThemeReview,
    #[serde(rename = "P6_DefineReport")]
    P6DefineReport,
    Complete,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Setup,
        Phase::P1Familiarization,
        Phase::P2ExactKeyword,
        Phase::P3DescriptivePattern,
        Phase::P4ThemeDevelopment,
        Phase::P5ThemeReview,
        Phase::P6DefineReport,
        Phase::Complete,
    ];

    pub fn ordinal(self) -> usize {
        Phase::ALL.iter().position(|p| *p == self).unwrap_or(0)
    }

    pub fn successor(self) -> Option<Phase> {
        Phase::ALL.get(self.ordinal() + 1).copied()
    }

    /// Whether the phase runs an analysis step (P1 to P6).
    pub fn is_analytic(self) -> bool {
        !matches!(self, Phase::Setup | Phase::Complete)
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "Setup",
            Phase::P1Familiarization => "P1_Familiarization",
            Phase::P2ExactKeyword => "P2_ExactKeyword",
            Phase::P3DescriptivePattern => "P3_DescriptivePattern",
            Phase::P4ThemeDevelopment => "P4_ThemeDevelopment",
            Phase::P5ThemeReview => "P5_ThemeReview",
            Phase::P6DefineReport => "P6_DefineReport",
            Phase::Complete => "Complete",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown phase `{0}`")]
pub struct UnknownPhase(pub String);

impl FromStr for Phase {
    type Err = UnknownPhase;

    /// Accepts full names (`P2_ExactKeyword`), short forms (`P2`, `p2`) and
    /// `setup` / `complete`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let found = Phase::ALL.iter().copied().find(|p| {
            let name = p.name().to_ascii_lowercase();
            name == lower || name.split('_').next() == Some(lower.as_str())
        });
        found.ok_or_else(|| UnknownPhase(t.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseState {
    pub current: Phase,
    pub entered_at: DateTime<Utc>,
    pub authorized_by: Option<ActorId>,
}
