//! Transcript ingestion, normalization, page segmentation and location refs.
//!
//! Plain text is the canonical input: paragraphs are blank-line separated
//! blocks. Each block is normalized (NFC, whitespace runs collapsed to one
//! space, line breaks inside a block folded into spaces) and empty blocks are
//! dropped. Pages group `page_size` consecutive paragraphs. Lines are derived
//! by wrapping each paragraph at a fixed width and are never ground truth.
//!
//! All character offsets are counted in Unicode scalar values.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::ids::TranscriptId;

pub const NORMALIZATION_VERSION: u8 = 1;
pub const DEFAULT_PAGE_SIZE: usize = 10;
pub const DEFAULT_LINE_WIDTH: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranscriptError {
    #[error("transcript has no non-empty paragraph")]
    EmptyTranscript,
    #[error("transcript is not valid UTF-8: {0}")]
    InvalidEncoding(String),
    #[error("page size must be at least 1")]
    InvalidPageSize,
    #[error("location out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid location: {0}")]
    InvalidLocation(String),
    #[error("location refers to transcript {found}, expected {expected}")]
    TranscriptMismatch { expected: String, found: String },
    #[error("cannot parse trace reference `{0}`")]
    BadTrace(String),
}

impl TranscriptError {
    pub fn name(&self) -> &'static str {
        match self {
            TranscriptError::EmptyTranscript => "EmptyTranscript",
            TranscriptError::InvalidEncoding(_) => "InvalidEncoding",
            TranscriptError::InvalidPageSize => "InvalidPageSize",
            TranscriptError::OutOfBounds(_) => "OutOfBounds",
            TranscriptError::InvalidLocation(_) => "InvalidLocation",
            TranscriptError::TranscriptMismatch { .. } => "TranscriptMismatch",
            TranscriptError::BadTrace(_) => "BadTrace",
        }
    }
}

/// Normalizes a text fragment the way paragraphs are normalized: NFC, every
/// whitespace run (including line breaks) becomes one space, ends trimmed.
pub fn normalize_fragment(text: &str) -> String {
    let composed: String = text.nfc().collect();
    composed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Character count of a string.
pub(crate) fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte range for a character range. Panics never; out-of-range offsets clamp.
pub(crate) fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let mut byte_start = s.len();
    let mut byte_end = s.len();
    for (n, b) in (&mut indices).enumerate() {
        if n == start {
            byte_start = b;
        }
        if n == end {
            byte_end = b;
            break;
        }
    }
    &s[byte_start.min(byte_end)..byte_end]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    /// 1-based.
    pub index: usize,
    pub text: String,
    /// Character offsets of derived line starts; first is always 0.
    pub line_offsets: Vec<usize>,
}

impl Paragraph {
    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }

    pub fn line_count(&self) -> usize {
        self.line_offsets.len()
    }

    /// 1-based line (within this paragraph) holding the given character.
    pub fn line_of(&self, char_offset: usize) -> usize {
        self.line_offsets.iter().take_while(|&&o| o <= char_offset).count().max(1)
    }
}

/// Greedy wrap at `width` characters, breaking at the last space that keeps
/// the line within width; words longer than width are hard-broken.
pub fn wrap_offsets(text: &str, width: usize) -> Vec<usize> {
    let width = width.max(1);
    let chars: Vec<char> = text.chars().collect();
    let mut offsets = vec![0];
    let mut start = 0;
    while chars.len() - start > width {
        let limit = start + width;
        let brk = (start + 1..=limit).rev().find(|&i| chars[i] == ' ');
        let next = match brk {
            Some(space) => space + 1,
            None => limit,
        };
        offsets.push(next);
        start = next;
    }
    offsets
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    /// 1-based.
    pub number: usize,
    pub first_paragraph: usize,
    pub last_paragraph: usize,
}

impl Page {
    pub fn paragraphs(&self) -> RangeInclusive<usize> {
        self.first_paragraph..=self.last_paragraph
    }

    pub fn len(&self) -> usize {
        self.last_paragraph + 1 - self.first_paragraph
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: TranscriptId,
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
    pub page_size: usize,
    pub line_width: usize,
    pub normalization_version: u8,
}

impl Transcript {
    /// Ingest raw bytes, rejecting anything that is not UTF-8.
    pub fn from_bytes(raw: &[u8], title: &str, page_size: usize) -> Result<Self, TranscriptError> {
        let text = std::str::from_utf8(raw)
            .map_err(|e| TranscriptError::InvalidEncoding(e.to_string()))?;
        Self::ingest(text, title, page_size)
    }

    pub fn ingest(raw_text: &str, title: &str, page_size: usize) -> Result<Self, TranscriptError> {
        Self::ingest_with_width(raw_text, title, page_size, DEFAULT_LINE_WIDTH)
    }

    pub fn ingest_with_width(
        raw_text: &str,
        title: &str,
        page_size: usize,
        line_width: usize,
    ) -> Result<Self, TranscriptError> {
        if page_size == 0 {
            return Err(TranscriptError::InvalidPageSize);
        }
        let raw_text = raw_text.strip_prefix('\u{feff}').unwrap_or(raw_text);
        let unified = raw_text.replace("\r\n", "\n").replace('\r', "\n");

        let mut blocks: Vec<String> = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in unified.split('\n') {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    blocks.push(current.join(" "));
                    current.clear();
                }
            } else {
                current.push(line);
            }
        }
        if !current.is_empty() {
            blocks.push(current.join(" "));
        }

        let paragraphs: Vec<Paragraph> = blocks
            .iter()
            .map(|b| normalize_fragment(b))
            .filter(|t| !t.is_empty())
            .enumerate()
            .map(|(i, text)| Paragraph {
                index: i + 1,
                line_offsets: wrap_offsets(&text, line_width),
                text,
            })
            .collect();
        if paragraphs.is_empty() {
            return Err(TranscriptError::EmptyTranscript);
        }

        let mut hasher = Sha256::new();
        for p in &paragraphs {
            hasher.update(p.text.as_bytes());
            hasher.update(b"\n\n");
        }
        let digest = hex::encode(hasher.finalize());
        Ok(Transcript {
            id: TranscriptId::new(format!("t-{}", &digest[..12])),
            title: normalize_fragment(title),
            paragraphs,
            page_size,
            line_width,
            normalization_version: NORMALIZATION_VERSION,
        })
    }

    pub fn paragraph_count(&self) -> usize {
        self.paragraphs.len()
    }

    /// 1-based lookup.
    pub fn paragraph(&self, index: usize) -> Option<&Paragraph> {
        index.checked_sub(1).and_then(|i| self.paragraphs.get(i))
    }

    /// Paragraphs joined by blank lines; ingesting this yields the same paragraphs.
    pub fn render(&self) -> String {
        self.paragraphs.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n\n")
    }

    pub fn pages(&self) -> Vec<Page> {
        segment_pages(self, self.page_size)
    }

    pub fn page_of(&self, paragraph: usize) -> usize {
        (paragraph.max(1) - 1) / self.page_size + 1
    }

    /// Text of a page: its paragraphs joined by newlines.
    pub fn page_text(&self, page: &Page) -> String {
        page.paragraphs()
            .filter_map(|i| self.paragraph(i))
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Location covering whole paragraphs `start..=end`.
    pub fn span(&self, start: usize, end: usize) -> LocationRef {
        LocationRef {
            transcript_id: self.id.clone(),
            page: Some(self.page_of(start)),
            paragraph_start: start,
            paragraph_end: end,
            char_start: None,
            char_end: None,
        }
    }

    /// Location of a character range inside one paragraph.
    pub fn chars(&self, paragraph: usize, start: usize, end: usize) -> LocationRef {
        LocationRef {
            char_start: Some(start),
            char_end: Some(end),
            ..self.span(paragraph, paragraph)
        }
    }

    pub fn page_span(&self, page: &Page) -> LocationRef {
        self.span(page.first_paragraph, page.last_paragraph)
    }

    /// Same location with `page` filled in from the paragraph start.
    pub fn canonical(&self, loc: &LocationRef) -> LocationRef {
        LocationRef { page: Some(self.page_of(loc.paragraph_start)), ..loc.clone() }
    }

    /// Checks a location's invariants against this transcript.
    pub fn validate(&self, loc: &LocationRef) -> Result<(), TranscriptError> {
        if loc.transcript_id != self.id {
            return Err(TranscriptError::TranscriptMismatch {
                expected: self.id.to_string(),
                found: loc.transcript_id.to_string(),
            });
        }
        if loc.paragraph_start == 0 || loc.paragraph_start > loc.paragraph_end {
            return Err(TranscriptError::InvalidLocation(format!(
                "paragraph range {}..{}",
                loc.paragraph_start, loc.paragraph_end
            )));
        }
        if loc.paragraph_end > self.paragraph_count() {
            return Err(TranscriptError::OutOfBounds(format!(
                "paragraph {} of {}",
                loc.paragraph_end,
                self.paragraph_count()
            )));
        }
        match (loc.char_start, loc.char_end) {
            (None, None) => Ok(()),
            (Some(start), Some(end)) => {
                if loc.paragraph_start != loc.paragraph_end {
                    return Err(TranscriptError::InvalidLocation(
                        "character offsets require a single paragraph".into(),
                    ));
                }
                if start >= end {
                    return Err(TranscriptError::InvalidLocation(format!(
                        "character range {start}..{end}"
                    )));
                }
                let len = self.paragraphs[loc.paragraph_start - 1].char_len();
                if end > len {
                    return Err(TranscriptError::OutOfBounds(format!(
                        "character {end} of paragraph length {len}"
                    )));
                }
                Ok(())
            }
            _ => Err(TranscriptError::InvalidLocation(
                "character offsets must be given as a pair".into(),
            )),
        }
    }

    /// Global 1-based derived line numbers spanned by a location.
    pub fn line_range(&self, loc: &LocationRef) -> (usize, usize) {
        let before = |p: usize| -> usize {
            self.paragraphs[..p.saturating_sub(1).min(self.paragraphs.len())]
                .iter()
                .map(Paragraph::line_count)
                .sum()
        };
        let (Some(first), Some(last)) =
            (self.paragraph(loc.paragraph_start), self.paragraph(loc.paragraph_end))
        else {
            return (0, 0);
        };
        let start_local = loc.char_start.map_or(1, |c| first.line_of(c));
        let end_local = match loc.char_end {
            Some(e) => last.line_of(e.saturating_sub(1)),
            None => last.line_count(),
        };
        (before(loc.paragraph_start) + start_local, before(loc.paragraph_end) + end_local)
    }

    /// Human-readable, parseable trace such as `t-1a2b p.1 ¶3:12-40 L5-6`.
    pub fn trace(&self, loc: &LocationRef) -> String {
        let (l1, l2) = self.line_range(loc);
        let lines = if l1 == l2 { format!("L{l1}") } else { format!("L{l1}-{l2}") };
        let page = loc.page.unwrap_or_else(|| self.page_of(loc.paragraph_start));
        format!("{} p.{} {} {}", loc.transcript_id, page, loc.paragraph_label(), lines)
    }
}

/// Splits a transcript into consecutive pages of at most `page_size` paragraphs.
pub fn segment_pages(transcript: &Transcript, page_size: usize) -> Vec<Page> {
    let size = page_size.max(1);
    let n = transcript.paragraph_count();
    (0..n.div_ceil(size))
        .map(|i| Page {
            number: i + 1,
            first_paragraph: i * size + 1,
            last_paragraph: ((i + 1) * size).min(n),
        })
        .collect()
}

/// Returns the exact text a location addresses.
pub fn resolve(transcript: &Transcript, loc: &LocationRef) -> Result<String, TranscriptError> {
    transcript.validate(loc)?;
    match (loc.char_start, loc.char_end) {
        (Some(start), Some(end)) => {
            let p = &transcript.paragraphs[loc.paragraph_start - 1];
            Ok(char_slice(&p.text, start, end).to_owned())
        }
        _ => Ok((loc.paragraph_start..=loc.paragraph_end)
            .map(|i| transcript.paragraphs[i - 1].text.as_str())
            .collect::<Vec<_>>()
            .join("\n")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocationRef {
    pub transcript_id: TranscriptId,
    pub page: Option<usize>,
    pub paragraph_start: usize,
    pub paragraph_end: usize,
    pub char_start: Option<usize>,
    pub char_end: Option<usize>,
}

impl LocationRef {
    pub fn paragraphs(&self) -> RangeInclusive<usize> {
        self.paragraph_start..=self.paragraph_end
    }

    pub fn intersects(&self, paragraph: usize) -> bool {
        self.paragraphs().contains(&paragraph)
    }

    /// `¶3`, `¶3-4` or `¶3:12-40`.
    pub fn paragraph_label(&self) -> String {
        let mut s = format!("¶{}", self.paragraph_start);
        if self.paragraph_end != self.paragraph_start {
            s.push_str(&format!("-{}", self.paragraph_end));
        }
        if let (Some(a), Some(b)) = (self.char_start, self.char_end) {
            s.push_str(&format!(":{a}-{b}"));
        }
        s
    }

    /// Sort key used for transcript order.
    pub fn order_key(&self) -> (usize, usize) {
        (self.paragraph_start, self.char_start.unwrap_or(0))
    }

    /// Parses the output of [`Transcript::trace`]. The line part is derived and ignored.
    pub fn parse_trace(trace: &str) -> Result<Self, TranscriptError> {
        let bad = || TranscriptError::BadTrace(trace.to_owned());
        let mut parts = trace.split_whitespace();
        let tid = parts.next().ok_or_else(bad)?;
        let page = parts
            .next()
            .and_then(|p| p.strip_prefix("p."))
            .and_then(|p| p.parse::<usize>().ok())
            .ok_or_else(bad)?;
        let para = parts.next().and_then(|p| p.strip_prefix('¶')).ok_or_else(bad)?;
        let (range, chars) = match para.split_once(':') {
            Some((r, c)) => (r, Some(c)),
            None => (para, None),
        };
        let parse_pair = |s: &str| -> Option<(usize, usize)> {
            match s.split_once('-') {
                Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
                None => {
                    let v = s.parse().ok()?;
                    Some((v, v))
                }
            }
        };
        let (ps, pe) = parse_pair(range).ok_or_else(bad)?;
        let (cs, ce) = match chars {
            Some(c) => {
                let (a, b) = c.split_once('-').ok_or_else(bad)?;
                (Some(a.parse().map_err(|_| bad())?), Some(b.parse().map_err(|_| bad())?))
            }
            None => (None, None),
        };
        Ok(LocationRef {
            transcript_id: TranscriptId::new(tid),
            page: Some(page),
            paragraph_start: ps,
            paragraph_end: pe,
            char_start: cs,
            char_end: ce,
        })
    }
}

impl fmt::Display for LocationRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.transcript_id, self.paragraph_label())
    }
}
