//! Response parsers and the reference emitters that generate their fixtures.
//!
//! The requested answer format is a numbered list of `Key: value` blocks.
//! Models drift, so the parsers also accept bold keys, bullets instead of
//! numbers, one-line `**code** – "passage" (Page n)` entries and Markdown
//! tables. Parsers never panic: they return records, warnings or
//! [`LlmError::ParseError`].

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::codelog::{CodeLog, Dimension};
use crate::transcript::{normalize_fragment, Page};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeEntry {
    pub code: String,
    /// Supporting passage; becomes the verbatim code's exact phrase.
    pub passage: String,
    pub page: usize,
    pub rationale: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCodes {
    pub entries: Vec<CodeEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GerundMapping {
    pub verbatim: String,
    pub gerund: String,
    pub family: String,
    /// Set by [`flag_unmatched`] when no active code has this exact phrase.
    pub unmatched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeProposal {
    pub label: String,
    pub families: Vec<String>,
    pub dimension: Dimension,
    pub definition: String,
}

static LIST_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\d+[.)]|[-*•])\s+").expect("valid regex"));
static KEY_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\*{0,2}([A-Za-z][A-Za-z ()/-]{0,40}?)\*{0,2}\s*:\s*(?:\*\*)?\s*(.*?)\s*$")
        .expect("valid regex")
});
static INLINE_ENTRY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\*{0,2}(.+?)\*{0,2}\s*[:–—-]\s*["“](.+?)["”]\s*\(?\s*(?:Page|p\.)\s*(\d+)\s*\)?\s*(?:[:–—-]\s*(.*))?$"#)
        .expect("valid regex")
});
static PAGE_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+)").expect("valid regex"));

fn strip_list_marker(line: &str) -> &str {
    match LIST_MARKER.find(line) {
        Some(m) => &line[m.end()..],
        None => line,
    }
}

/// Removes one pair of surrounding double quotes (straight or curly).
fn unquote(s: &str) -> String {
    let t = s.trim();
    for (open, close) in [('"', '"'), ('“', '”')] {
        if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
            return t[open.len_utf8()..t.len() - close.len_utf8()].trim().to_owned();
        }
    }
    t.to_owned()
}

fn strip_bold(s: &str) -> String {
    let t = s.trim();
    let t = t.strip_prefix("**").unwrap_or(t);
    let t = t.strip_suffix("**").unwrap_or(t);
    t.trim().to_owned()
}

fn is_none_answer(text: &str) -> bool {
    let t = text.trim().trim_matches(|c: char| c == '.' || c == '*' || c.is_whitespace());
    t.is_empty() || t.eq_ignore_ascii_case("none")
}

/// `Key: value` blocks. `fields` maps a canonical field to accepted key names
/// (compared case-insensitively); a new record starts when a key repeats.
fn parse_blocks(text: &str, fields: &[(&'static str, &[&str])]) -> Vec<Vec<(&'static str, String)>> {
    let mut records: Vec<Vec<(&'static str, String)>> = Vec::new();
    let mut current: Vec<(&'static str, String)> = Vec::new();
    let mut last: Option<usize> = None;
    for raw in text.lines() {
        let line = strip_list_marker(raw.trim());
        if line.is_empty() {
            last = None;
            continue;
        }
        let field = KEY_VALUE.captures(line).and_then(|c| {
            let key = c[1].trim().to_ascii_lowercase();
            fields
                .iter()
                .find(|(_, names)| names.contains(&key.as_str()))
                .map(|(f, _)| (*f, strip_bold(&c[2])))
        });
        match field {
            Some((name, value)) => {
                if current.iter().any(|(f, _)| *f == name) {
                    records.push(std::mem::take(&mut current));
                }
                current.push((name, value));
                last = Some(current.len() - 1);
            }
            None => {
                if let Some(i) = last {
                    let slot = &mut current[i].1;
                    if !slot.is_empty() {
                        slot.push(' ');
                    }
                    slot.push_str(line);
                }
            }
        }
    }
    if !current.is_empty() {
        records.push(current);
    }
    records
}

fn field<'a>(record: &'a [(&'static str, String)], name: &str) -> Option<&'a str> {
    record.iter().find(|(f, _)| *f == name).map(|(_, v)| v.as_str())
}

// ---------------------------------------------------------------- tables

/// Escapes a cell for a Markdown pipe table. Line breaks become `<br>`; a
/// literal `<` is backslash-escaped so it cannot be mistaken for one.
pub fn escape_cell(s: &str) -> String {
    s.replace('\\', "\\\\")
        .replace('|', "\\|")
        .replace('<', "\\<")
        .replace("\r\n", "\n")
        .replace('\r', "\n")
        .replace('\n', "<br>")
}

pub fn unescape_cell(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(c) = rest.chars().next() {
        if c == '\\' {
            match rest[1..].chars().next() {
                Some(n @ ('\\' | '|' | '<')) => {
                    out.push(n);
                    rest = &rest[2..];
                }
                _ => {
                    out.push(c);
                    rest = &rest[1..];
                }
            }
        } else if let Some(after) = rest.strip_prefix("<br>") {
            out.push('\n');
            rest = after;
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

/// Splits one table row on unescaped pipes. Cells are trimmed and unescaped.
pub fn split_row(line: &str) -> Vec<String> {
    let t = line.trim();
    let t = t.strip_prefix('|').unwrap_or(t);
    let mut cells = Vec::new();
    let mut cell = String::new();
    let mut chars = t.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                cell.push(c);
                if let Some(n) = chars.next() {
                    cell.push(n);
                }
            }
            '|' => cells.push(std::mem::take(&mut cell)),
            _ => cell.push(c),
        }
    }
    if !cell.trim().is_empty() {
        cells.push(cell);
    }
    cells.iter().map(|c| unescape_cell(c.trim())).collect()
}

fn is_separator_row(cells: &[String]) -> bool {
    !cells.is_empty()
        && cells.iter().all(|c| !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | ' ')))
}

/// First pipe table in the text: header cells and data rows.
pub fn parse_table(text: &str) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .skip_while(|l| !l.starts_with('|'))
        .take_while(|l| l.starts_with('|'))
        .collect();
    let (head, rest) = lines.split_first()?;
    let header = split_row(head);
    // Only the line right under the header can be the delimiter row.
    let rest = match rest.split_first() {
        Some((first, tail)) if is_separator_row(&split_row(first)) => tail,
        _ => rest,
    };
    let rows = rest.iter().map(|l| split_row(l)).collect();
    Some((header, rows))
}

fn column(header: &[String], pick: impl Fn(&str) -> bool) -> Option<usize> {
    header.iter().position(|h| pick(&h.to_lowercase()))
}

fn cell(row: &[String], col: Option<usize>) -> String {
    col.and_then(|c| row.get(c)).map(|s| unquote(&strip_bold(s))).unwrap_or_default()
}

fn page_from(value: &str) -> Option<usize> {
    PAGE_NUMBER.captures(value).and_then(|c| c[1].parse().ok())
}

// ---------------------------------------------------------------- codes

const CODE_FIELDS: &[(&str, &[&str])] = &[
    ("code", &["code", "keyword", "code phrase", "emerging code"]),
    ("passage", &["passage", "sentence", "supporting sentence", "exact sentence", "quote", "excerpt"]),
    ("page", &["page", "page number"]),
    ("rationale", &["rationale", "interpretation", "why"]),
];

pub fn parse_code_entries(text: &str, page: &Page) -> Result<ParsedCodes, LlmError> {
    if is_none_answer(text) {
        return Ok(ParsedCodes::default());
    }
    let mut raw: Vec<(String, String, Option<usize>, String)> = Vec::new();

    if let Some((header, rows)) = parse_table(text) {
        let page_col = column(&header, |h| h.contains("page") || h.contains("line reference"));
        let rationale_col = column(&header, |h| h.contains("rationale") || h.contains("interpretation"));
        let passage_col = column(&header, |h| {
            ["verbatim", "passage", "sentence", "quote", "excerpt", "exact"].iter().any(|k| h.contains(k))
        });
        let code_col = column(&header, |h| h.contains("code") || h.contains("keyword"))
            .filter(|c| Some(*c) != passage_col);
        for row in &rows {
            let page_value = cell(row, page_col);
            raw.push((
                cell(row, code_col),
                cell(row, passage_col),
                page_from(&page_value),
                cell(row, rationale_col),
            ));
        }
    } else {
        for record in parse_blocks(text, CODE_FIELDS) {
            raw.push((
                field(&record, "code").map(unquote).unwrap_or_default(),
                field(&record, "passage").map(unquote).unwrap_or_default(),
                field(&record, "page").and_then(page_from),
                field(&record, "rationale").unwrap_or_default().to_owned(),
            ));
        }
        if raw.is_empty() {
            for line in text.lines() {
                let line = strip_list_marker(line.trim());
                if let Some(c) = INLINE_ENTRY.captures(line) {
                    raw.push((
                        strip_bold(&c[1]),
                        c[2].trim().to_owned(),
                        c[3].parse().ok(),
                        c.get(4).map(|m| m.as_str().trim().to_owned()).unwrap_or_default(),
                    ));
                }
            }
        }
    }

    if raw.is_empty() {
        return Err(LlmError::ParseError(
            "no code entries found; expected numbered Code/Passage/Page blocks".into(),
        ));
    }
    let mut out = ParsedCodes::default();
    for (i, (code, passage, marker, rationale)) in raw.into_iter().enumerate() {
        if passage.trim().is_empty() {
            out.warnings.push(format!(
                "entry {} (`{}`) has no supporting passage and was dropped",
                i + 1,
                code
            ));
            continue;
        }
        out.entries.push(CodeEntry {
            code,
            passage,
            page: marker.unwrap_or(page.number),
            rationale,
        });
    }
    Ok(out)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Formats entries exactly as the extraction prompt requests them.
pub fn emit_code_entries(entries: &[CodeEntry]) -> String {
    if entries.is_empty() {
        return "NONE\n".into();
    }
    let mut out = String::new();
    for (i, e) in entries.iter().enumerate() {
        out.push_str(&format!(
            "{}. Code: {}\n   Passage: \"{}\"\n   Page: {}\n   Rationale: {}\n\n",
            i + 1,
            one_line(&e.code),
            one_line(&e.passage),
            e.page,
            one_line(&e.rationale)
        ));
    }
    out
}

// ---------------------------------------------------------------- gerunds

const GERUND_FIELDS: &[(&str, &[&str])] = &[
    ("verbatim", &["verbatim", "verbatim code", "verbatim expression", "phrase"]),
    ("gerund", &["gerund", "gerund code", "descriptive code", "descriptive"]),
    ("family", &["family", "code family", "category"]),
];

pub fn parse_gerund_mappings(text: &str) -> Result<Vec<GerundMapping>, LlmError> {
    if is_none_answer(text) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    if let Some((header, rows)) = parse_table(text) {
        let v = column(&header, |h| h.contains("verbatim"));
        let f = column(&header, |h| h.contains("family") || h.contains("category"));
        let g = column(&header, |h| h.contains("gerund") || h.contains("descriptive"));
        if v.is_none() || g.is_none() {
            return Err(LlmError::ParseError("mapping table lacks verbatim or gerund column".into()));
        }
        for row in &rows {
            out.push(GerundMapping {
                verbatim: cell(row, v),
                gerund: cell(row, g),
                family: cell(row, f),
                unmatched: false,
            });
        }
        return Ok(out);
    }
    let records = parse_blocks(text, GERUND_FIELDS);
    if records.is_empty() {
        return Err(LlmError::ParseError("no Verbatim/Gerund/Family entries found".into()));
    }
    for record in records {
        let verbatim = field(&record, "verbatim").map(unquote).unwrap_or_default();
        let gerund = field(&record, "gerund").map(unquote).unwrap_or_default();
        if verbatim.is_empty() || gerund.is_empty() {
            continue;
        }
        out.push(GerundMapping {
            verbatim,
            gerund,
            family: field(&record, "family").map(unquote).unwrap_or_default(),
            unmatched: false,
        });
    }
    Ok(out)
}

/// Flags mappings whose phrase equals no active verbatim code after normalization.
pub fn flag_unmatched(mappings: &mut [GerundMapping], log: &CodeLog) {
    for m in mappings {
        let phrase = normalize_fragment(&m.verbatim);
        m.unmatched = !log.active_verbatim().any(|c| normalize_fragment(&c.exact_phrase) == phrase);
    }
}

pub fn emit_gerund_mappings(mappings: &[GerundMapping]) -> String {
    let mut out = String::new();
    for (i, m) in mappings.iter().enumerate() {
        out.push_str(&format!(
            "{}. Verbatim: \"{}\"\n   Gerund: {}\n   Family: {}\n\n",
            i + 1,
            one_line(&m.verbatim),
            one_line(&m.gerund),
            one_line(&m.family)
        ));
    }
    out
}

// ---------------------------------------------------------------- themes

const THEME_FIELDS: &[(&str, &[&str])] = &[
    ("theme", &["theme", "theme name", "candidate theme"]),
    ("families", &["families", "family", "code families"]),
    ("dimension", &["dimension"]),
    ("definition", &["definition", "description"]),
];

fn split_families(s: &str) -> Vec<String> {
    s.split(';').map(|f| unquote(f.trim())).filter(|f| !f.is_empty()).collect()
}

pub fn parse_theme_proposals(text: &str) -> Result<Vec<ThemeProposal>, LlmError> {
    if is_none_answer(text) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    if let Some((header, rows)) = parse_table(text) {
        let t = column(&header, |h| h.contains("theme"));
        let f = column(&header, |h| h.contains("famil"));
        let d = column(&header, |h| h.contains("dimension"));
        let def = column(&header, |h| h.contains("definition") || h.contains("description"));
        if t.is_none() {
            return Err(LlmError::ParseError("theme table lacks a theme column".into()));
        }
        for row in &rows {
            out.push(ThemeProposal {
                label: cell(row, t),
                families: split_families(&cell(row, f)),
                dimension: Dimension::parse(&cell(row, d)).unwrap_or_default(),
                definition: cell(row, def),
            });
        }
        return Ok(out);
    }
    let records = parse_blocks(text, THEME_FIELDS);
    if records.is_empty() {
        return Err(LlmError::ParseError("no Theme/Families entries found".into()));
    }
    for record in records {
        let label = field(&record, "theme").map(unquote).unwrap_or_default();
        if label.is_empty() {
            continue;
        }
        out.push(ThemeProposal {
            label,
            families: split_families(field(&record, "families").unwrap_or_default()),
            dimension: field(&record, "dimension").and_then(Dimension::parse).unwrap_or_default(),
            definition: field(&record, "definition").unwrap_or_default().to_owned(),
        });
    }
    Ok(out)
}

pub fn emit_theme_proposals(themes: &[ThemeProposal]) -> String {
    let mut out = String::new();
    for (i, t) in themes.iter().enumerate() {
        let families: Vec<String> = t.families.iter().map(|f| one_line(f)).collect();
        out.push_str(&format!(
            "{}. Theme: {}\n   Families: {}\n   Dimension: {}\n   Definition: {}\n\n",
            i + 1,
            one_line(&t.label),
            families.join("; "),
            t.dimension,
            one_line(&t.definition)
        ));
    }
    out
}
