//! The final Markdown report.
//!
//! Sections always appear in the same order so reports diff cleanly:
//! summaries, the verbatim code log, descriptive codes and themes, coverage,
//! integrity and the audit trail.

use std::fmt::Write as _;

use super::export::{action_summary_rows, table_markdown};
use crate::codelog::{render_code_log, CodeLog, MemoKind, Theme};
use crate::coverage::{audit, default_statuses};
use crate::llm::parse::escape_cell;
use crate::workflow::{CodingMode, Session};

fn mode_label(mode: CodingMode) -> &'static str {
    match mode {
        CodingMode::ExactKeywordOnly => "exact keyword only",
        CodingMode::ExactPlusDescriptive => "exact keyword plus descriptive",
    }
}

fn strings(cells: &[&str]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

pub fn render_report(session: &Session) -> String {
    let mut out = String::new();
    let title = session.transcript.as_ref().map_or("(no transcript)", |t| t.title.as_str());
    let _ = writeln!(out, "# Thematic Analysis Report\n");
    let _ = writeln!(out, "- Research question: {}", session.research_question);
    let _ = writeln!(out, "- Transcript: {title}");
    let _ = writeln!(out, "- Coding mode: {}", mode_label(session.coding_mode));
    let _ = writeln!(out, "- Phase: {}\n", session.current_phase().name());

    summaries(&mut out, &session.codes);
    code_log(&mut out, session);
    descriptive(&mut out, &session.codes);
    coverage(&mut out, session);
    integrity(&mut out, session);
    audit_trail(&mut out, session);
    out
}

fn summaries(out: &mut String, log: &CodeLog) {
    let _ = writeln!(out, "## Summaries\n");
    let mut any = false;
    for kind in [MemoKind::PhaseSummary, MemoKind::SegmentedSummary] {
        for memo in log.memos.iter().filter(|m| m.kind == kind) {
            any = true;
            let _ = writeln!(out, "{}\n", memo.body);
        }
    }
    if !any {
        let _ = writeln!(out, "_No summaries recorded._\n");
    }
}

fn code_log(out: &mut String, session: &Session) {
    let _ = writeln!(out, "## Verbatim Code Log\n");
    let table = render_code_log(&session.codes, session.transcript.as_ref());
    if table.rows.is_empty() {
        let _ = writeln!(out, "_No active verbatim codes._\n");
        return;
    }
    let rows: Vec<Vec<String>> = table.rows.iter().map(|r| r.to_vec()).collect();
    let _ = writeln!(out, "{}", table_markdown(&table.header, &rows));
}

fn theme_definition<'a>(log: &'a CodeLog, theme: &Theme) -> Option<&'a str> {
    log.memos
        .iter()
        .rev()
        .find(|m| m.has_flag("definition") && m.links_object(&theme.id))
        .map(|m| m.body.as_str())
}

fn descriptive(out: &mut String, log: &CodeLog) {
    let _ = writeln!(out, "## Descriptive Codes and Themes\n");
    let mut rows = Vec::new();
    for g in log.active_gerunds() {
        let sources: Vec<String> = g
            .source_verbatim_ids
            .iter()
            .map(|id| log.verbatim_code(id).map_or_else(|| id.to_string(), |c| c.exact_phrase.clone()))
            .collect();
        let family = g
            .family_id
            .as_ref()
            .and_then(|f| log.family(f))
            .map_or_else(String::new, |f| f.label.clone());
        rows.push(vec![sources.join("; "), g.label.clone(), family]);
    }
    if rows.is_empty() {
        let _ = writeln!(out, "_No descriptive codes._\n");
    } else {
        let header = strings(&["Verbatim code", "Gerund code", "Code family"]);
        let _ = writeln!(out, "{}", table_markdown(&header, &rows));
    }

    let themes: Vec<&Theme> = log.active_themes().collect();
    if themes.is_empty() {
        let _ = writeln!(out, "_No themes._\n");
        return;
    }
    for t in themes {
        let families: Vec<String> =
            t.family_ids.iter().filter_map(|f| log.family(f)).map(|f| f.label.clone()).collect();
        let _ = writeln!(out, "### {}\n", t.label);
        let _ = writeln!(out, "- Dimension: {}", t.dimension);
        let _ = writeln!(out, "- Code families: {}", families.join("; "));
        let _ = writeln!(out, "- Supporting quotes: {}", t.supporting_verbatim_ids.len());
        if !t.definition.trim().is_empty() {
            let _ = writeln!(out, "- Definition: {}", escape_cell(t.definition.trim()));
        }
        let _ = writeln!(out);
        if let Some(def) = theme_definition(log, t) {
            let _ = writeln!(out, "{def}\n");
        }
    }
}

fn coverage(out: &mut String, session: &Session) {
    let _ = writeln!(out, "## Coverage\n");
    let computed;
    let report = match (&session.coverage_report, &session.transcript) {
        (Some(r), _) => r,
        (None, Some(t)) => match audit(t, &session.codes.verbatim, &default_statuses(), session.current_phase()) {
            Ok(r) => {
                computed = r;
                &computed
            }
            Err(e) => {
                let _ = writeln!(out, "_Coverage unavailable: {e}_\n");
                return;
            }
        },
        (None, None) => {
            let _ = writeln!(out, "_No transcript loaded._\n");
            return;
        }
    };
    let _ = writeln!(out, "```\n{}```\n", report.table());
}

fn integrity(out: &mut String, session: &Session) {
    let _ = writeln!(out, "## Integrity\n");
    match &session.integrity_report {
        Some(r) => {
            let _ = writeln!(out, "{}", r.summary_table().trim_end());
            let flagged: Vec<_> = session.codes.active_verbatim().filter(|c| c.needs_human).collect();
            for c in flagged {
                let kind = c.integrity.as_ref().map_or("unchecked".to_owned(), |v| v.kind.to_string());
                let _ = writeln!(out, "- needs review: {} \"{}\" ({kind})", c.id, c.exact_phrase);
            }
            let _ = writeln!(out);
        }
        None => {
            let _ = writeln!(out, "_Integrity has not been validated._\n");
        }
    }
}

fn audit_trail(out: &mut String, session: &Session) {
    let _ = writeln!(out, "## Audit Trail\n");
    let (header, rows) = action_summary_rows(&session.action_summary());
    let _ = writeln!(out, "{}", table_markdown(&header, &rows));
    if session.trail.is_empty() {
        let _ = writeln!(out, "_No human revisions._");
        return;
    }
    let header = strings(&["#", "Actor", "Kind", "Target", "Phase", "Time", "Rationale"]);
    let rows: Vec<Vec<String>> = session
        .trail
        .iter()
        .map(|a| {
            vec![
                a.sequence.to_string(),
                a.actor_id.to_string(),
                a.kind.to_string(),
                a.target_id
                    .as_ref()
                    .or_else(|| a.after.as_ref().map(|o| o.id()))
                    .map_or_else(String::new, |id| id.to_string()),
                a.phase.name().to_owned(),
                a.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                a.rationale.clone(),
            ]
        })
        .collect();
    let _ = write!(out, "{}", table_markdown(&header, &rows));
}
