//! Code log, action summary and log exports, plus code log import.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::InterfaceError;
use crate::codelog::{render_code_log, CodeLogTable, Origin, CODE_LOG_HEADER};
use crate::llm::parse::{escape_cell, parse_table};
use crate::revision::{ActionSummary, Category, RevisionAction};
use crate::transcript::LocationRef;
use crate::workflow::{verify_chain, InteractionEntry, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ExportFormat {
    type Err = InterfaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "md" | "markdown" => Ok(ExportFormat::Markdown),
            other => Err(InterfaceError::Malformed(format!("unknown export format {other:?}"))),
        }
    }
}

const ORIGIN_COLUMN: &str = "Origin";

fn csv_err(e: csv::Error) -> InterfaceError {
    InterfaceError::Malformed(e.to_string())
}

fn table_csv(header: &[String], rows: &[Vec<String>]) -> Result<String, InterfaceError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| InterfaceError::IoFailure(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| InterfaceError::Malformed(e.to_string()))
}

pub fn table_markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let line = |cells: &[String]| {
        let cells: Vec<String> = cells.iter().map(|c| escape_cell(c)).collect();
        format!("| {} |\n", cells.join(" | "))
    };
    let mut out = line(header);
    out.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

/// Renders a code log table. Markdown cells are escaped so they survive a
/// round trip through [`parse_markdown_code_log`].
pub fn render_table(table: &CodeLogTable, format: ExportFormat) -> Result<String, InterfaceError> {
    let header = table.header.to_vec();
    let rows: Vec<Vec<String>> = table.rows.iter().map(|r| r.to_vec()).collect();
    match format {
        ExportFormat::Csv => table_csv(&header, &rows),
        ExportFormat::Markdown => Ok(table_markdown(&header, &rows)),
    }
}

pub fn export_code_log(session: &Session, format: ExportFormat) -> Result<String, InterfaceError> {
    render_table(&render_code_log(&session.codes, session.transcript.as_ref()), format)
}

pub fn parse_markdown_code_log(text: &str) -> Result<CodeLogTable, InterfaceError> {
    let (header, rows) =
        parse_table(text).ok_or_else(|| InterfaceError::Malformed("no table found".into()))?;
    if header != CODE_LOG_HEADER {
        return Err(InterfaceError::HeaderMismatch(header.join(" | ")));
    }
    let mut table = CodeLogTable::empty();
    for (i, row) in rows.into_iter().enumerate() {
        let found = row.len();
        let row: [String; 4] =
            row.try_into().map_err(|_| InterfaceError::RowArityError { row: i + 1, expected: 4, found })?;
        table.rows.push(row);
    }
    Ok(table)
}

/// One imported code log row, not yet committed to a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeCandidate {
    pub exact_phrase: String,
    pub location: LocationRef,
    pub paragraph_context: String,
    pub rationale: String,
    pub origin: Origin,
}

/// Reads a CSV code log. The four standard columns are required; an extra
/// `Origin` column (`ai` / `human`) is honoured, otherwise rows count as
/// human-authored.
pub fn import_code_log(csv_text: &str) -> Result<Vec<CodeCandidate>, InterfaceError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let has_origin = match header.len() {
        4 => false,
        5 if header[4].eq_ignore_ascii_case(ORIGIN_COLUMN) => true,
        _ => return Err(InterfaceError::HeaderMismatch(header.join(","))),
    };
    if header[..4] != CODE_LOG_HEADER {
        return Err(InterfaceError::HeaderMismatch(header.join(",")));
    }
    let expected = header.len();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.len() != expected {
            return Err(InterfaceError::RowArityError { row, expected, found: record.len() });
        }
        let location = LocationRef::parse_trace(&record[1])
            .map_err(|e| InterfaceError::Malformed(format!("row {row}: {e}")))?;
        let origin = if has_origin {
            match record[4].trim().to_ascii_lowercase().as_str() {
                "ai" => Origin::Ai,
                "human" => Origin::Human,
                other => return Err(InterfaceError::Malformed(format!("row {row}: unknown origin {other:?}"))),
            }
        } else {
            Origin::Human
        };
        out.push(CodeCandidate {
            exact_phrase: record[0].to_owned(),
            location,
            paragraph_context: record[2].to_owned(),
            rationale: record[3].to_owned(),
            origin,
        });
    }
    Ok(out)
}

/// Rows are action categories plus a total; one column per actor.
pub fn action_summary_csv(summary: &ActionSummary) -> Result<String, InterfaceError> {
    let (header, rows) = action_summary_rows(summary);
    table_csv(&header, &rows)
}

pub fn action_summary_rows(summary: &ActionSummary) -> (Vec<String>, Vec<Vec<String>>) {
    let actors: Vec<_> = summary.per_actor.keys().collect();
    let mut header = vec!["Action".to_owned()];
    header.extend(actors.iter().map(|a| a.to_string()));
    let mut rows = Vec::new();
    for c in Category::ALL {
        let mut row = vec![c.label().to_owned()];
        row.extend(actors.iter().map(|a| summary.actor(a).get(c).to_string()));
        rows.push(row);
    }
    let mut total = vec!["Total".to_owned()];
    total.extend(actors.iter().map(|a| summary.actor(a).total.to_string()));
    rows.push(total);
    (header, rows)
}

/// The interaction log, one JSON entry per line.
pub fn interaction_log_jsonl(session: &Session) -> Result<String, InterfaceError> {
    let mut out = String::new();
    for e in session.interaction_log.entries() {
        out.push_str(&serde_json::to_string(e).map_err(|e| InterfaceError::Malformed(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads an exported interaction log back, refusing a broken hash chain.
pub fn read_interaction_log_jsonl(text: &str) -> Result<Vec<InteractionEntry>, InterfaceError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let entry = serde_json::from_str(line).map_err(|e| InterfaceError::Malformed(format!("line {}: {e}", i + 1)))?;
        entries.push(entry);
    }
    verify_chain(&entries).map_err(|_| InterfaceError::HashMismatch)?;
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailLine {
    pub action: RevisionAction,
    pub prev_hash: String,
    pub hash: String,
}

fn trail_hash(prev: &str, action: &RevisionAction) -> Result<String, InterfaceError> {
    let body = serde_json::to_vec(action).map_err(|e| InterfaceError::Malformed(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(&body);
    Ok(hex::encode(h.finalize()))
}

const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// The audit trail as hash-chained JSON lines.
pub fn trail_jsonl(trail: &[RevisionAction]) -> Result<String, InterfaceError> {
    let mut prev = GENESIS.to_owned();
    let mut out = String::new();
    for action in trail {
        let hash = trail_hash(&prev, action)?;
        let line = TrailLine { action: action.clone(), prev_hash: prev, hash: hash.clone() };
        out.push_str(&serde_json::to_string(&line).map_err(|e| InterfaceError::Malformed(e.to_string()))?);
        out.push('\n');
        prev = hash;
    }
    Ok(out)
}

/// Reads and verifies a trail written by [`trail_jsonl`].
pub fn read_trail_jsonl(text: &str) -> Result<Vec<RevisionAction>, InterfaceError> {
    let mut prev = GENESIS.to_owned();
    let mut out = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let line: TrailLine = serde_json::from_str(line)
            .map_err(|e| InterfaceError::Malformed(format!("line {}: {e}", i + 1)))?;
        if line.prev_hash != prev || trail_hash(&prev, &line.action)? != line.hash {
            return Err(InterfaceError::HashMismatch);
        }
        prev = line.hash;
        out.push(line.action);
    }
    Ok(out)
}
