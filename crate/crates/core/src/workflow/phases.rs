//! The six phase runs.
//!
//! Each run gathers all model exchanges first and commits afterwards, so a
//! failure anywhere discards the whole run. Per-page calls in P1 and P2 may
//! run on several threads; results are committed in page order.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use super::{Ctx, Direction, Outcome, Payload, Session};
use crate::codelog::{
    derive_gerund, new_verbatim_code, CodeFamily, CodeLogError, CodeStatus, Dimension, MemoKind, MemoLink,
    Origin, Theme,
};
use crate::coverage::{audit, default_statuses};
use crate::error::EngineError;
use crate::ids::{ObjectId, ObjectKind};
use crate::integrity::{closest_window, validate_log, verify, IntegrityConfig, IntegrityVerdict, VerdictKind};
use crate::llm::parse::{flag_unmatched, parse_code_entries, parse_gerund_mappings, parse_theme_proposals};
use crate::llm::prompt::{bindings, Bindings, PromptTemplate};
use crate::llm::{Gateway, LlmConfig, LlmError, RawCompletion, TemplateId};
use crate::phase::Phase;
use crate::revision::{place_verbatim, supporting_verbatim};
use crate::transcript::{normalize_fragment, Page, Transcript};

pub(crate) struct Exchange {
    template: TemplateId,
    system_role: String,
    prompt: String,
    completion: RawCompletion,
}

/// Issues prompts for one phase and remembers every exchange.
pub(crate) struct Exchanger<'a> {
    gateway: &'a Gateway,
    config: &'a LlmConfig,
    phase: Phase,
    at: DateTime<Utc>,
    exchanges: Vec<Exchange>,
}

impl<'a> Exchanger<'a> {
    pub(crate) fn new(gateway: &'a Gateway, config: &'a LlmConfig, phase: Phase, at: DateTime<Utc>) -> Self {
        Self { gateway, config, phase, at, exchanges: Vec::new() }
    }

    pub(crate) fn ask(&mut self, template: TemplateId, b: &Bindings) -> Result<String, LlmError> {
        let prompt = PromptTemplate::get(template).render(b)?;
        let request = self.config.request(template, self.phase, prompt);
        let completion = self.gateway.complete(&request, self.at)?;
        let text = completion.response_text.clone();
        self.exchanges.push(Exchange {
            template,
            system_role: request.system_role,
            prompt: request.prompt,
            completion,
        });
        Ok(text)
    }

    pub(crate) fn into_exchanges(self) -> Vec<Exchange> {
        self.exchanges
    }
}

/// Runs `work` once per page, in parallel when the backend allows it, and
/// returns results with their exchanges in page order.
fn per_page<T: Send>(
    gateway: &Gateway,
    config: &LlmConfig,
    phase: Phase,
    at: DateTime<Utc>,
    pages: &[Page],
    work: impl Fn(&Page, &mut Exchanger<'_>) -> Result<T, EngineError> + Sync,
) -> Result<Vec<(T, Vec<Exchange>)>, EngineError> {
    let run = |page: &Page| {
        let mut ex = Exchanger::new(gateway, config, phase, at);
        let out = work(page, &mut ex)?;
        Ok((out, ex.into_exchanges()))
    };
    if !gateway.supports_parallel() || pages.len() < 2 {
        return pages.iter().map(run).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = pages.iter().map(|p| scope.spawn(move || run(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("page worker panicked"))
            .collect()
    })
}

struct Candidate {
    code: String,
    passage: String,
    rationale: String,
    page: Page,
    verdict: IntegrityVerdict,
}

fn settles(v: &IntegrityVerdict) -> bool {
    matches!(v.kind, VerdictKind::Exact | VerdictKind::LocationMismatch)
}

impl Session {
    pub(crate) fn commit_exchanges(&mut self, exchanges: Vec<Exchange>) {
        let phase = self.phase.current;
        for ex in exchanges {
            let at = ex.completion.timestamp;
            self.interaction_log.append(
                Direction::Prompt,
                phase,
                Payload::Prompt {
                    template: ex.template,
                    request_hash: ex.completion.request_hash.clone(),
                    system_role: ex.system_role,
                    prompt: ex.prompt,
                },
                at,
            );
            self.interaction_log.append(
                Direction::Response,
                phase,
                Payload::Response {
                    request_hash: ex.completion.request_hash,
                    text: ex.completion.response_text,
                    usage: ex.completion.usage,
                },
                at,
            );
        }
    }

    pub(crate) fn run_current_phase(&mut self, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        match self.phase.current {
            Phase::P1Familiarization => self.run_phase1(ctx, gateway),
            Phase::P2ExactKeyword => self.run_phase2(ctx, gateway),
            Phase::P3DescriptivePattern => self.run_phase3(ctx, gateway),
            Phase::P4ThemeDevelopment => self.run_phase4(ctx, gateway),
            Phase::P5ThemeReview => self.run_phase5(ctx, gateway),
            Phase::P6DefineReport => self.run_phase6(ctx, gateway),
            other => Err(EngineError::WrongPhase { expected: Phase::P1Familiarization, actual: other }),
        }
    }

    fn require_phase(&self, expected: Phase) -> Result<(), EngineError> {
        if self.phase.current != expected {
            return Err(EngineError::WrongPhase { expected, actual: self.phase.current });
        }
        Ok(())
    }

    fn question(&self) -> (&'static str, String) {
        ("research_question", self.research_question.clone())
    }

    pub(crate) fn run_phase1(&mut self, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        self.require_phase(Phase::P1Familiarization)?;
        let transcript = self.transcript()?.clone();
        let mut ex = Exchanger::new(gateway, &self.llm_config, Phase::P1Familiarization, ctx.at);
        let narrative =
            ex.ask(TemplateId::P1Narrative, &bindings([self.question(), ("text_segment", transcript.render())]))?;
        let first = ex.into_exchanges();

        let pages = transcript.pages();
        let question = self.question();
        let segments = per_page(gateway, &self.llm_config, Phase::P1Familiarization, ctx.at, &pages, |page, ex| {
            let b = bindings([
                question.clone(),
                ("page_number", page.number.to_string()),
                ("text_segment", transcript.page_text(page)),
            ]);
            Ok(ex.ask(TemplateId::P1Segment, &b)?)
        })?;

        let mut out = Outcome::default();
        self.commit_exchanges(first);
        let whole = MemoLink::Location { location: transcript.span(1, transcript.paragraph_count()) };
        out.created.push(self.push_memo(MemoKind::PhaseSummary, narrative.trim().to_owned(), vec![whole], Origin::Ai, vec![]));
        for (page, (text, exchanges)) in pages.iter().zip(segments) {
            self.commit_exchanges(exchanges);
            let link = MemoLink::Location { location: transcript.canonical(&transcript.page_span(page)) };
            out.created.push(self.push_memo(MemoKind::SegmentedSummary, text.trim().to_owned(), vec![link], Origin::Ai, vec![]));
        }
        Ok(out)
    }

    pub(crate) fn run_phase2(&mut self, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        self.require_phase(Phase::P2ExactKeyword)?;
        let transcript = self.transcript()?.clone();
        let config = self.settings.integrity();
        let budget = self.settings.repair_budget;
        let question = self.question();
        let pages = transcript.pages();

        let per = per_page(gateway, &self.llm_config, Phase::P2ExactKeyword, ctx.at, &pages, |page, ex| {
            extract_page(&transcript, page, &question, &config, budget, ex)
        })?;

        let mut out = Outcome::default();
        for ((candidates, warnings), exchanges) in per {
            self.commit_exchanges(exchanges);
            out.warnings.extend(warnings);
            for c in candidates {
                if let Some(id) = self.commit_candidate(&transcript, c, &config, &mut out.warnings)? {
                    out.created.push(id);
                }
            }
        }
        Ok(out)
    }

    fn commit_candidate(
        &mut self,
        transcript: &Transcript,
        c: Candidate,
        config: &IntegrityConfig,
        warnings: &mut Vec<String>,
    ) -> Result<Option<ObjectId>, EngineError> {
        let hint = transcript.canonical(&transcript.page_span(&c.page));
        let fallback = match c.verdict.kind {
            VerdictKind::NotFound => closest_window(&c.passage, transcript, config.window_band)
                .map(|w| transcript.canonical(&transcript.span(w.paragraph, w.paragraph)))
                .unwrap_or_else(|| hint.clone()),
            _ => hint.clone(),
        };
        let rationale = if c.rationale.is_empty() {
            c.code.clone()
        } else if c.code.is_empty() {
            c.rationale.clone()
        } else {
            format!("{}: {}", c.code, c.rationale)
        };
        let (id, seq) = self.ids.next(ObjectKind::Verbatim);
        let mut code = new_verbatim_code(id.clone(), seq, &c.passage, fallback, "", &rationale, Origin::Ai)?;
        place_verbatim(&mut code, transcript, Some(&hint), config);
        let duplicate = self.codes.active_verbatim().any(|o| {
            o.exact_phrase == code.exact_phrase && o.location == code.location
        });
        if duplicate {
            warnings.push(format!("skipped duplicate code `{}`", code.exact_phrase));
            return Ok(None);
        }
        self.codes.verbatim.push(code.clone());
        self.base_log.verbatim.push(code);
        Ok(Some(id))
    }

    pub(crate) fn run_phase3(&mut self, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        self.require_phase(Phase::P3DescriptivePattern)?;
        let active = crate::codelog::ordered_active_codes(&self.codes);
        if active.is_empty() {
            return Err(EngineError::NoActiveCodes);
        }
        let listing: Vec<String> = active.iter().map(|c| format!("- \"{}\"", c.exact_phrase)).collect();
        let mut ex = Exchanger::new(gateway, &self.llm_config, Phase::P3DescriptivePattern, ctx.at);
        let text = ex.ask(TemplateId::P3Map, &bindings([self.question(), ("prior_codes", listing.join("\n"))]))?;
        let mut mappings = parse_gerund_mappings(&text)?;
        flag_unmatched(&mut mappings, &self.codes);

        let policy = self.settings.gerund_policy();
        let mut out = Outcome::default();
        let mut unmatched = Vec::new();
        // gerund label (folded) -> index in `gerunds`; family label (folded) -> index in `families`
        let mut gerund_ix: BTreeMap<String, usize> = BTreeMap::new();
        let mut family_ix: BTreeMap<String, usize> = BTreeMap::new();
        let mut gerunds = Vec::new();
        let mut families: Vec<CodeFamily> = Vec::new();
        let mut ids = self.ids.clone();

        for m in &mappings {
            if m.unmatched {
                unmatched.push(m);
                continue;
            }
            let phrase = normalize_fragment(&m.verbatim);
            let sources: Vec<ObjectId> = active
                .iter()
                .filter(|c| normalize_fragment(&c.exact_phrase) == phrase)
                .map(|c| c.id.clone())
                .collect();
            let key = m.gerund.trim().to_lowercase();
            let gi = match gerund_ix.get(&key) {
                Some(&i) => {
                    let g: &mut crate::codelog::GerundCode = &mut gerunds[i];
                    for s in sources {
                        if !g.source_verbatim_ids.contains(&s) {
                            g.source_verbatim_ids.push(s);
                        }
                    }
                    i
                }
                None => {
                    let (id, seq) = ids.next(ObjectKind::Gerund);
                    let g = derive_gerund(&self.codes, id, seq, &sources, &m.gerund, Origin::Ai, &policy)?;
                    gerunds.push(g);
                    gerund_ix.insert(key, gerunds.len() - 1);
                    gerunds.len() - 1
                }
            };
            let family_label = m.family.trim();
            if family_label.is_empty() || gerunds[gi].family_id.is_some() {
                continue;
            }
            let fkey = family_label.to_lowercase();
            let fi = match family_ix.get(&fkey) {
                Some(&i) => i,
                None => {
                    if self.codes.family_label_taken(family_label, None) {
                        return Err(CodeLogError::DuplicateLabel { kind: "family", label: family_label.into() }.into());
                    }
                    let (id, seq) = ids.next(ObjectKind::Family);
                    families.push(CodeFamily {
                        id,
                        label: family_label.to_owned(),
                        member_gerund_ids: Vec::new(),
                        dimension: Dimension::Unassigned,
                        status: CodeStatus::AiProposed,
                        origin: Origin::Ai,
                        created_seq: seq,
                    });
                    family_ix.insert(fkey, families.len() - 1);
                    families.len() - 1
                }
            };
            gerunds[gi].family_id = Some(families[fi].id.clone());
            let gid = gerunds[gi].id.clone();
            if !families[fi].member_gerund_ids.contains(&gid) {
                families[fi].member_gerund_ids.push(gid);
            }
        }

        self.ids = ids;
        self.commit_exchanges(ex.into_exchanges());
        for g in gerunds {
            if g.needs_human {
                out.warnings.push(format!("gerund label `{}` is not in gerund form", g.label));
            }
            out.created.push(g.id.clone());
            self.codes.gerunds.push(g.clone());
            self.base_log.gerunds.push(g);
        }
        for f in families {
            out.created.push(f.id.clone());
            self.codes.families.push(f.clone());
            self.base_log.families.push(f);
        }
        if !unmatched.is_empty() {
            let mut body = String::from("Mappings whose verbatim phrase matches no active code:\n");
            for m in &unmatched {
                body.push_str(&format!("- \"{}\" -> {} ({})\n", m.verbatim, m.gerund, m.family));
            }
            out.warnings.push(format!("{} unmatched mapping(s)", unmatched.len()));
            let id = self.push_memo(MemoKind::Methodological, body, vec![], Origin::Ai, vec!["unmatched".into()]);
            out.created.push(id);
        }
        Ok(out)
    }

    pub(crate) fn run_phase4(&mut self, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        self.require_phase(Phase::P4ThemeDevelopment)?;
        let families: Vec<CodeFamily> = self.codes.active_families().cloned().collect();
        if families.is_empty() {
            return Err(EngineError::NoFamilies);
        }
        let listing: Vec<String> = families
            .iter()
            .map(|f| {
                let members: Vec<&str> = f
                    .member_gerund_ids
                    .iter()
                    .filter_map(|g| self.codes.gerund(g))
                    .filter(|g| g.status.is_active())
                    .map(|g| g.label.as_str())
                    .collect();
                format!("- {}: {}", f.label, members.join("; "))
            })
            .collect();
        let mut ex = Exchanger::new(gateway, &self.llm_config, Phase::P4ThemeDevelopment, ctx.at);
        let text = ex.ask(TemplateId::P4Themes, &bindings([self.question(), ("prior_codes", listing.join("\n"))]))?;
        let proposals = parse_theme_proposals(&text)?;

        let mut out = Outcome::default();
        let mut themes: Vec<Theme> = Vec::new();
        let mut ids = self.ids.clone();
        for p in proposals {
            let mut family_ids = Vec::new();
            for label in &p.families {
                match self.codes.find_family_by_label(label) {
                    Some(f) if !family_ids.contains(&f.id) => family_ids.push(f.id.clone()),
                    Some(_) => {}
                    None => out.warnings.push(format!("theme `{}` names unknown family `{label}`", p.label)),
                }
            }
            if family_ids.is_empty() {
                out.warnings.push(format!("theme `{}` has no known family and was skipped", p.label));
                continue;
            }
            if self.codes.theme_label_taken(&p.label, None) {
                return Err(CodeLogError::DuplicateLabel { kind: "theme", label: p.label }.into());
            }
            if themes.iter().any(|t| t.label.to_lowercase() == p.label.trim().to_lowercase()) {
                out.warnings.push(format!("duplicate theme `{}` skipped", p.label));
                continue;
            }
            let (id, seq) = ids.next(ObjectKind::Theme);
            themes.push(Theme {
                id,
                label: p.label.trim().to_owned(),
                supporting_verbatim_ids: supporting_verbatim(&self.codes, &family_ids),
                family_ids,
                definition: p.definition.trim().to_owned(),
                dimension: p.dimension,
                status: CodeStatus::AiProposed,
                origin: Origin::Ai,
                created_seq: seq,
            });
        }
        self.ids = ids;
        self.commit_exchanges(ex.into_exchanges());
        for t in themes {
            out.created.push(t.id.clone());
            self.codes.themes.push(t.clone());
            self.base_log.themes.push(t);
        }
        Ok(out)
    }

    /// Theme label, dimension, definition and resolvable quotations.
    fn theme_brief(&self, theme: &Theme) -> (String, usize) {
        let transcript = self.transcript.as_ref();
        let quotes: Vec<String> = theme
            .supporting_verbatim_ids
            .iter()
            .filter_map(|id| self.codes.verbatim_code(id))
            .filter(|c| c.status.is_active())
            .map(|c| match transcript {
                Some(t) => format!("- \"{}\" ({})", c.exact_phrase, t.trace(&c.location)),
                None => format!("- \"{}\"", c.exact_phrase),
            })
            .collect();
        let mut s = format!(
            "Theme: {}\nDimension: {}\nDefinition: {}\nSupporting quotations:\n",
            theme.label, theme.dimension, theme.definition
        );
        if quotes.is_empty() {
            s.push_str("(none)\n");
        } else {
            s.push_str(&quotes.join("\n"));
            s.push('\n');
        }
        (s, quotes.len())
    }

    pub(crate) fn run_phase5(&mut self, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        self.require_phase(Phase::P5ThemeReview)?;
        let themes: Vec<Theme> = self.codes.active_themes().cloned().collect();
        let mut ex = Exchanger::new(gateway, &self.llm_config, Phase::P5ThemeReview, ctx.at);
        let mut reviews = Vec::new();
        for t in &themes {
            let (brief, quotes) = self.theme_brief(t);
            let text = ex.ask(TemplateId::P5Review, &bindings([self.question(), ("prior_codes", brief)]))?;
            reviews.push((t.id.clone(), t.label.clone(), text, quotes));
        }
        self.commit_exchanges(ex.into_exchanges());
        let mut out = Outcome::default();
        for (id, label, text, quotes) in reviews {
            let mut flags = Vec::new();
            if quotes == 0 {
                flags.push("evidence_gap".to_owned());
                out.warnings.push(format!("theme `{label}` has no resolvable supporting quotation"));
            }
            let link = MemoLink::Object { id };
            out.created.push(self.push_memo(MemoKind::Analytic, text.trim().to_owned(), vec![link], Origin::Ai, flags));
        }
        Ok(out)
    }

    pub(crate) fn run_phase6(&mut self, ctx: &Ctx, gateway: &Gateway) -> Result<Outcome, EngineError> {
        self.require_phase(Phase::P6DefineReport)?;
        let transcript = self.transcript()?.clone();
        let themes: Vec<Theme> = self.codes.active_themes().cloned().collect();
        let mut ex = Exchanger::new(gateway, &self.llm_config, Phase::P6DefineReport, ctx.at);
        let mut definitions = Vec::new();
        for t in &themes {
            let (brief, _) = self.theme_brief(t);
            let text = ex.ask(TemplateId::P6Define, &bindings([self.question(), ("prior_codes", brief)]))?;
            definitions.push((t.id.clone(), text));
        }
        self.commit_exchanges(ex.into_exchanges());
        let mut out = Outcome::default();
        for (id, text) in definitions {
            let link = MemoLink::Object { id };
            out.created.push(self.push_memo(
                MemoKind::Analytic,
                text.trim().to_owned(),
                vec![link],
                Origin::Ai,
                vec!["definition".into()],
            ));
        }
        let config = self.settings.integrity();
        validate_log(&mut self.base_log, &transcript, &config);
        self.integrity_report = Some(validate_log(&mut self.codes, &transcript, &config));
        self.coverage_report =
            Some(audit(&transcript, &self.codes.verbatim, &default_statuses(), Phase::P6DefineReport)?);
        self.report = Some(crate::interface::report::render_report(self));
        Ok(out)
    }
}

/// Extraction for one page: extract, retry once on unreadable output, then
/// repair non-exact candidates within the budget.
fn extract_page(
    transcript: &Transcript,
    page: &Page,
    question: &(&'static str, String),
    config: &IntegrityConfig,
    budget: u32,
    ex: &mut Exchanger<'_>,
) -> Result<(Vec<Candidate>, Vec<String>), EngineError> {
    let text_segment = transcript.page_text(page);
    let b = bindings([
        question.clone(),
        ("page_number", page.number.to_string()),
        ("text_segment", text_segment.clone()),
    ]);
    let first = ex.ask(TemplateId::P2Extract, &b)?;
    let parsed = match parse_code_entries(&first, page) {
        Ok(p) => p,
        Err(LlmError::ParseError(_)) => {
            let second = ex.ask(TemplateId::P2FormatReminder, &b)?;
            parse_code_entries(&second, page)?
        }
        Err(e) => return Err(e.into()),
    };
    let hint = transcript.page_span(page);
    let mut candidates = Vec::new();
    for entry in parsed.entries {
        let mut passage = entry.passage;
        let mut code = entry.code;
        let mut verdict = verify(&passage, transcript, Some(&hint), config);
        let mut tries = 0;
        while !settles(&verdict) && tries < budget {
            tries += 1;
            let prior = format!("Code: {code}\nPassage: \"{passage}\"");
            let rb = bindings([
                ("page_number", page.number.to_string()),
                ("text_segment", text_segment.clone()),
                ("prior_codes", prior),
            ]);
            let reply = ex.ask(TemplateId::P2Repair, &rb)?;
            if let Some(fixed) = parse_code_entries(&reply, page).ok().and_then(|p| p.entries.into_iter().next()) {
                passage = fixed.passage;
                if !fixed.code.is_empty() {
                    code = fixed.code;
                }
                verdict = verify(&passage, transcript, Some(&hint), config);
            }
        }
        candidates.push(Candidate { code, passage, rationale: entry.rationale, page: page.clone(), verdict });
    }
    Ok((candidates, parsed.warnings))
}
