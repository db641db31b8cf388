//! Trace-to-text integrity.
//!
//! A verbatim code is only trustworthy if its phrase is a literal extract of
//! the transcript. [`check_exact`] does case-sensitive substring matching after
//! whitespace normalization; [`detect_near_verbatim`] looks for the closest
//! case-folded window by edit distance so drift such as `it is` for `It's`
//! can be reported together with the source wording.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codelog::CodeLog;
use crate::ids::ObjectId;
use crate::transcript::{char_len, normalize_fragment, LocationRef, Transcript};

pub const DEFAULT_NEAR_THRESHOLD: f64 = 0.15;
pub const DEFAULT_WINDOW_BAND: f64 = 0.30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Exact,
    NearVerbatim,
    NotFound,
    LocationMismatch,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::Exact => "Exact",
            VerdictKind::NearVerbatim => "NearVerbatim",
            VerdictKind::NotFound => "NotFound",
            VerdictKind::LocationMismatch => "LocationMismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityVerdict {
    pub kind: VerdictKind,
    pub matched_location: Option<LocationRef>,
    pub normalized_distance: Option<f64>,
    pub suggested_exact: Option<String>,
}

impl IntegrityVerdict {
    fn exact(loc: LocationRef) -> Self {
        Self {
            kind: VerdictKind::Exact,
            matched_location: Some(loc),
            normalized_distance: None,
            suggested_exact: None,
        }
    }

    fn not_found() -> Self {
        Self {
            kind: VerdictKind::NotFound,
            matched_location: None,
            normalized_distance: None,
            suggested_exact: None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.kind == VerdictKind::Exact
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityConfig {
    pub near_threshold: f64,
    /// Window lengths searched are `phrase_len * (1 ± window_band)`.
    pub window_band: f64,
}

impl Default for IntegrityConfig {
    fn default() -> Self {
        Self { near_threshold: DEFAULT_NEAR_THRESHOLD, window_band: DEFAULT_WINDOW_BAND }
    }
}

/// Char-for-char lower casing. Characters whose lowercase form is longer than
/// one scalar are kept as is so offsets stay aligned with the original.
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn fold(s: &str) -> Vec<char> {
    s.chars().map(fold_char).collect()
}

/// Levenshtein distance over characters, two-row dynamic programme.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Case-folded, whitespace-normalized distance divided by the longer length.
pub fn normalized_distance(phrase: &str, candidate: &str) -> f64 {
    let a = fold(&normalize_fragment(phrase));
    let b = fold(&normalize_fragment(candidate));
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / denom as f64
}

fn char_offset(text: &str, byte: usize) -> usize {
    char_len(&text[..byte])
}

/// Exact, case-sensitive substring check after whitespace normalization.
///
/// With a hint, a match inside the hinted paragraphs wins (one starting at the
/// hinted character offset first, otherwise the leftmost); a match that only
/// exists elsewhere yields `LocationMismatch`. Without a hint the first match
/// in paragraph order is returned.
pub fn check_exact(
    phrase: &str,
    transcript: &Transcript,
    hint: Option<&LocationRef>,
) -> IntegrityVerdict {
    let needle = normalize_fragment(phrase);
    if needle.is_empty() {
        return IntegrityVerdict::not_found();
    }
    let needle_chars = char_len(&needle);
    let locate = |p: usize, byte: usize| {
        let text = &transcript.paragraphs[p - 1].text;
        let start = char_offset(text, byte);
        transcript.chars(p, start, start + needle_chars)
    };

    if let Some(hint) = hint.filter(|h| h.transcript_id == transcript.id) {
        if let (Some(cs), Some(para)) = (hint.char_start, transcript.paragraph(hint.paragraph_start)) {
            let chars: String = para.text.chars().skip(cs).collect();
            if chars.starts_with(&needle) {
                return IntegrityVerdict::exact(transcript.chars(
                    hint.paragraph_start,
                    cs,
                    cs + needle_chars,
                ));
            }
        }
        let last = hint.paragraph_end.min(transcript.paragraph_count());
        for p in hint.paragraph_start.max(1)..=last {
            if let Some(byte) = transcript.paragraphs[p - 1].text.find(&needle) {
                return IntegrityVerdict::exact(locate(p, byte));
            }
        }
        return match first_match(transcript, &needle) {
            Some((p, byte)) => IntegrityVerdict {
                kind: VerdictKind::LocationMismatch,
                matched_location: Some(locate(p, byte)),
                normalized_distance: None,
                suggested_exact: None,
            },
            None => IntegrityVerdict::not_found(),
        };
    }

    match first_match(transcript, &needle) {
        Some((p, byte)) => IntegrityVerdict::exact(locate(p, byte)),
        None => IntegrityVerdict::not_found(),
    }
}

fn first_match(transcript: &Transcript, needle: &str) -> Option<(usize, usize)> {
    transcript
        .paragraphs
        .iter()
        .find_map(|p| p.text.find(needle).map(|b| (p.index, b)))
}

/// Closest window found by [`closest_window`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatch {
    pub paragraph: usize,
    pub char_start: usize,
    pub char_end: usize,
    /// Original-case text of the window after snapping to word boundaries.
    pub text: String,
    pub edit_distance: usize,
    pub normalized_distance: f64,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

fn is_terminal_punct(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\u{2026}')
}

fn is_closing_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')' | ']')
}

/// Widens a raw window so it never cuts a word and keeps the sentence-final
/// punctuation that follows it.
fn snap(chars: &[char], mut start: usize, mut end: usize) -> (usize, usize) {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    while start > 0 && start < chars.len() && is_word_char(chars[start - 1]) && is_word_char(chars[start]) {
        start -= 1;
    }
    while end > 0 && end < chars.len() && is_word_char(chars[end - 1]) && is_word_char(chars[end]) {
        end += 1;
    }
    while end < chars.len() && is_terminal_punct(chars[end]) {
        end += 1;
    }
    while end < chars.len() && is_closing_quote(chars[end]) && end > 0 && is_terminal_punct(chars[end - 1]) {
        end += 1;
    }
    (start, end)
}

/// Minimum edit-distance window over every paragraph.
///
/// Windows have lengths within `phrase_len * (1 ± band)`. The winner has the
/// smallest raw distance; ties go to the earlier paragraph, then the leftmost
/// start, then the shorter window. The winning window is snapped to word
/// boundaries and the reported distance is recomputed on the snapped text.
pub fn closest_window(phrase: &str, transcript: &Transcript, band: f64) -> Option<WindowMatch> {
    let query = fold(&normalize_fragment(phrase));
    let n = query.len();
    if n == 0 {
        return None;
    }
    let lo = ((n as f64) * (1.0 - band)).ceil().max(1.0) as usize;
    let hi = ((n as f64) * (1.0 + band)).floor().max(lo as f64) as usize;

    // (distance, paragraph, start, len)
    let mut best: Option<(usize, usize, usize, usize)> = None;
    let mut column = vec![0usize; n + 1];
    let mut next = vec![0usize; n + 1];
    for para in &transcript.paragraphs {
        let text = fold(&para.text);
        if text.len() < lo {
            continue;
        }
        for start in 0..=text.len() - lo {
            let max_len = hi.min(text.len() - start);
            for (i, v) in column.iter_mut().enumerate() {
                *v = i;
            }
            for len in 1..=max_len {
                let c = text[start + len - 1];
                next[0] = len;
                for i in 1..=n {
                    let sub = column[i - 1] + usize::from(query[i - 1] != c);
                    next[i] = sub.min(column[i] + 1).min(next[i - 1] + 1);
                }
                std::mem::swap(&mut column, &mut next);
                if len >= lo {
                    let d = column[n];
                    if best.is_none_or(|(bd, ..)| d < bd) {
                        best = Some((d, para.index, start, len));
                    }
                }
            }
        }
    }

    let (_, p, start, len) = best?;
    let original: Vec<char> = transcript.paragraphs[p - 1].text.chars().collect();
    let (s, e) = snap(&original, start, start + len);
    let text: String = original[s..e].iter().collect();
    let folded: Vec<char> = text.chars().map(fold_char).collect();
    let edit_distance = levenshtein(&query, &folded);
    let denom = n.max(folded.len());
    Some(WindowMatch {
        paragraph: p,
        char_start: s,
        char_end: e,
        text,
        edit_distance,
        normalized_distance: edit_distance as f64 / denom as f64,
    })
}

/// Near-verbatim search: `NearVerbatim` with the source wording when the
/// closest window is within `near_threshold`, otherwise `NotFound`.
///
/// A window that differs only in letter case has distance zero and is still
/// reported as `NearVerbatim`, since the exact check is case-sensitive.
pub fn detect_near_verbatim(
    phrase: &str,
    transcript: &Transcript,
    near_threshold: f64,
) -> IntegrityVerdict {
    detect_near_verbatim_with(phrase, transcript, near_threshold, DEFAULT_WINDOW_BAND)
}

pub fn detect_near_verbatim_with(
    phrase: &str,
    transcript: &Transcript,
    near_threshold: f64,
    band: f64,
) -> IntegrityVerdict {
    match closest_window(phrase, transcript, band) {
        Some(w) if w.normalized_distance <= near_threshold => IntegrityVerdict {
            kind: VerdictKind::NearVerbatim,
            matched_location: Some(transcript.chars(w.paragraph, w.char_start, w.char_end)),
            normalized_distance: Some(w.normalized_distance),
            suggested_exact: Some(w.text),
        },
        _ => IntegrityVerdict::not_found(),
    }
}

/// Exact check, falling through to near-verbatim detection when nothing matches.
pub fn verify(
    phrase: &str,
    transcript: &Transcript,
    hint: Option<&LocationRef>,
    config: &IntegrityConfig,
) -> IntegrityVerdict {
    let verdict = check_exact(phrase, transcript, hint);
    if verdict.kind == VerdictKind::NotFound {
        detect_near_verbatim_with(phrase, transcript, config.near_threshold, config.window_band)
    } else {
        verdict
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GerundPolicy {
    /// First tokens accepted even without an `-ing` ending, compared case-folded.
    pub exceptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GerundCheck {
    pub passes: bool,
    pub diagnostic: String,
}

/// Morphological gerund check on the first token of a label.
pub fn check_gerund(label: &str, policy: &GerundPolicy) -> GerundCheck {
    let Some(first) = label.split_whitespace().next() else {
        return GerundCheck { passes: false, diagnostic: "label is empty".into() };
    };
    let token: String = first.chars().map(fold_char).collect();
    if policy.exceptions.iter().any(|e| e.chars().map(fold_char).collect::<String>() == token) {
        return GerundCheck {
            passes: true,
            diagnostic: format!("first token `{first}` is on the exception list"),
        };
    }
    if !token.ends_with("ing") {
        return GerundCheck {
            passes: false,
            diagnostic: format!("first token `{first}` does not end in -ing"),
        };
    }
    if token.chars().count() < 5 {
        return GerundCheck {
            passes: false,
            diagnostic: format!("first token `{first}` is shorter than 5 characters"),
        };
    }
    GerundCheck { passes: true, diagnostic: format!("first token `{first}` is a gerund") }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub exact: usize,
    pub near_verbatim: usize,
    pub not_found: usize,
    pub location_mismatch: usize,
}

impl VerdictCounts {
    pub fn add(&mut self, kind: VerdictKind) {
        match kind {
            VerdictKind::Exact => self.exact += 1,
            VerdictKind::NearVerbatim => self.near_verbatim += 1,
            VerdictKind::NotFound => self.not_found += 1,
            VerdictKind::LocationMismatch => self.location_mismatch += 1,
        }
    }

    pub fn get(&self, kind: VerdictKind) -> usize {
        match kind {
            VerdictKind::Exact => self.exact,
            VerdictKind::NearVerbatim => self.near_verbatim,
            VerdictKind::NotFound => self.not_found,
            VerdictKind::LocationMismatch => self.location_mismatch,
        }
    }

    pub fn total(&self) -> usize {
        self.exact + self.near_verbatim + self.not_found + self.location_mismatch
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub per_code: BTreeMap<ObjectId, IntegrityVerdict>,
    pub summary: VerdictCounts,
}

impl IntegrityReport {
    pub fn from_verdicts(per_code: BTreeMap<ObjectId, IntegrityVerdict>) -> Self {
        let mut summary = VerdictCounts::default();
        for v in per_code.values() {
            summary.add(v.kind);
        }
        Self { per_code, summary }
    }

    /// Per-kind summary as a small Markdown table.
    pub fn summary_table(&self) -> String {
        let mut out = String::from("| Verdict | Count |\n|---|---|\n");
        for kind in [
            VerdictKind::Exact,
            VerdictKind::NearVerbatim,
            VerdictKind::NotFound,
            VerdictKind::LocationMismatch,
        ] {
            out.push_str(&format!("| {kind} | {} |\n", self.summary.get(kind)));
        }
        out
    }
}

/// Verifies every active verbatim code against its own location and writes
/// the verdict back onto the code.
pub fn validate_log(log: &mut CodeLog, transcript: &Transcript, config: &IntegrityConfig) -> IntegrityReport {
    let mut per_code = BTreeMap::new();
    for code in log.verbatim.iter_mut().filter(|c| c.status.is_active()) {
        let verdict = verify(&code.exact_phrase, transcript, Some(&code.location), config);
        code.needs_human = !verdict.is_exact();
        code.integrity = Some(verdict.clone());
        per_code.insert(code.id.clone(), verdict);
    }
    IntegrityReport::from_verdicts(per_code)
}
