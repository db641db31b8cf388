//! `thematic`: drive an analysis session stored in a single file.
//!
//! Each invocation loads the session, runs one engine command as `--actor`,
//! and saves it back. Failures exit nonzero with the domain error name first
//! on stderr, e.g. `ModeViolation: ...`.

use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use thematic_core::coverage::coverage_gaps_prompt;
use thematic_core::interface::{self, export, ExportFormat};
use thematic_core::llm::{gateway_for, Gateway, MockBackend};
use thematic_core::workflow::{replay, Approval, Command, Outcome};
use thematic_core::{AnalysisSettings, CodeStatus, CodingMode, Ctx, EngineError, MemoKind, Phase, RevisionRequest, Session};
use thematic_server::ServerConfig;

#[derive(Debug, Parser)]
#[command(name = "thematic", version, about = "Human-AI collaborative thematic analysis")]
struct Cli {
    /// Session file to read and update.
    #[arg(short, long, global = true, env = "THEMATIC_SESSION", default_value = "session.json")]
    session: PathBuf,
    /// Who is acting; defaults to the OS user name.
    #[arg(long, global = true, env = "THEMATIC_ACTOR")]
    actor: Option<String>,
    /// TOML file with `llm`, `fixtures_dir`, `bind` and `data_dir` settings.
    #[arg(long, global = true, env = "THEMATIC_CONFIG")]
    config: Option<PathBuf>,
    /// Directory of mock fixtures; overrides the config file.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    KeywordOnly,
    Descriptive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum What {
    CodeLog,
    Actions,
    Log,
    Trail,
    Report,
    Session,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Create a new session file.
    Init {
        #[arg(long)]
        question: String,
        #[arg(long, value_enum, default_value = "descriptive")]
        mode: Mode,
        /// Paragraphs per page sent to the model.
        #[arg(long)]
        page_size: Option<usize>,
        /// Overwrite an existing session file.
        #[arg(long)]
        force: bool,
    },
    /// Load a transcript (a file path, or `-` for stdin).
    Ingest {
        file: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// Run the current phase.
    Run,
    /// Approve moving to the next phase.
    Approve {
        #[arg(long)]
        to: Phase,
    },
    /// Go back to an earlier analytic phase.
    Revert {
        #[arg(long)]
        to: Phase,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    /// Validate verbatim integrity and audit paragraph coverage.
    Audit {
        /// Code statuses that count towards coverage, comma separated.
        #[arg(long, value_delimiter = ',')]
        statuses: Option<Vec<String>>,
    },
    /// Apply revision actions from a JSON file holding one request or a list.
    Act { file: PathBuf },
    /// Record a memo.
    Memo {
        #[arg(long, default_value = "analytic")]
        kind: String,
        body: String,
    },
    /// Send a positionality statement for a reflexive prompt.
    Reflect { positionality: String },
    /// Per-actor counts of revision actions.
    Summary {
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
    /// Write an export to stdout or a file.
    Export {
        #[arg(value_enum)]
        what: What,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rebuild a session from an exported interaction log.
    Replay {
        log: PathBuf,
        /// Where to save the rebuilt session.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Current phase and object counts.
    Status,
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

struct Failure {
    name: String,
    message: String,
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Self { name: e.name().into(), message: e.to_string() }
    }
}

impl From<interface::InterfaceError> for Failure {
    fn from(e: interface::InterfaceError) -> Self {
        EngineError::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { name: "UsageError".into(), message: message.into() }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure { name: "IoFailure".into(), message: format!("{}: {e}", path.display()) }
}

fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| usage(format!("{what}: {e}")))
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| io(path, e))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| io(path, e))
    }
}

fn default_actor() -> String {
    ["USER", "USERNAME", "LOGNAME"]
        .iter()
        .find_map(|k| std::env::var(k).ok().filter(|v| !v.trim().is_empty()))
        .unwrap_or_else(|| "unknown".into())
}

struct App {
    cli: Cli,
    config: ServerConfig,
    actor: String,
}

impl App {
    fn ctx(&self) -> Ctx {
        Ctx::now(self.actor.clone())
    }

    fn load(&self) -> Result<Session, Failure> {
        Ok(interface::load(&self.cli.session)?)
    }

    fn save(&self, s: &Session) -> Result<(), Failure> {
        Ok(interface::save(s, &self.cli.session)?)
    }

    fn gateway(&self, s: &Session) -> Result<Gateway, Failure> {
        let fixtures = self.cli.fixtures.as_deref().or(self.config.fixtures_dir.as_deref());
        gateway_for(&s.llm_config, fixtures).map_err(|e| EngineError::from(e).into())
    }

    /// Loads, runs one command, saves.
    fn execute(&self, command: Command) -> Result<(Session, Outcome), Failure> {
        let mut s = self.load()?;
        let gateway = match command {
            Command::RunPhase | Command::ReflexivePrompt { .. } => self.gateway(&s)?,
            _ => Gateway::mock(MockBackend::new()),
        };
        let outcome = s.execute(command, &self.ctx(), &gateway)?;
        self.save(&s)?;
        Ok((s, outcome))
    }
}

fn print_outcome(s: &Session, outcome: &Outcome) {
    println!("phase: {}", s.current_phase().name());
    if !outcome.created.is_empty() {
        let ids: Vec<String> = outcome.created.iter().map(|id| id.to_string()).collect();
        println!("created: {}", ids.join(" "));
    }
    for w in &outcome.warnings {
        println!("warning: {w}");
    }
}

fn run(app: &App) -> Result<(), Failure> {
    match &app.cli.command {
        Cmd::Init { question, mode, page_size, force } => {
            if app.cli.session.exists() && !force {
                return Err(usage(format!("{} exists; pass --force to replace it", app.cli.session.display())));
            }
            let mode = match mode {
                Mode::KeywordOnly => CodingMode::ExactKeywordOnly,
                Mode::Descriptive => CodingMode::ExactPlusDescriptive,
            };
            let mut settings = AnalysisSettings::default();
            if let Some(n) = page_size {
                settings.page_size = *n;
            }
            let s = Session::create(question, mode, app.config.llm.clone(), settings, &app.ctx())?;
            app.save(&s)?;
            println!("{}", s.id);
        }
        Cmd::Ingest { file, title } => {
            let text = read_input(file)?;
            let title = title.clone().unwrap_or_else(|| {
                file.file_stem().map_or_else(|| "transcript".into(), |s| s.to_string_lossy().into_owned())
            });
            let (s, _) = app.execute(Command::LoadTranscript { title, text })?;
            let t = s.transcript()?;
            println!("{}: {} paragraphs on {} pages", t.id, t.paragraphs.len(), t.pages().len());
        }
        Cmd::Run => {
            let (s, outcome) = app.execute(Command::RunPhase)?;
            print_outcome(&s, &outcome);
        }
        Cmd::Approve { to } => {
            let approval = Approval { actor: app.actor.as_str().into(), to: *to };
            let (s, _) = app.execute(Command::Advance { approval: Some(approval) })?;
            println!("phase: {} (approved by {})", s.current_phase().name(), app.actor);
        }
        Cmd::Revert { to, rationale } => {
            let (s, _) = app.execute(Command::Revert { to: *to, rationale: rationale.clone() })?;
            println!("phase: {}", s.current_phase().name());
        }
        Cmd::Audit { statuses } => {
            let include_statuses = match statuses {
                Some(list) => Some(
                    list.iter()
                        .map(|v| parse_json::<CodeStatus>(&format!("\"{}\"", v.trim()), "status"))
                        .collect::<Result<_, _>>()?,
                ),
                None => None,
            };
            app.execute(Command::ValidateIntegrity)?;
            let (s, _) = app.execute(Command::AuditCoverage { include_statuses })?;
            let integrity = s.integrity_report.as_ref().expect("just validated");
            println!("integrity");
            println!("{}", integrity.summary_table());
            let coverage = s.coverage_report.as_ref().expect("just audited");
            println!("coverage");
            print!("{}", coverage.table());
            println!("gaps: {}", coverage.uncoded.len());
            println!("{}", coverage_gaps_prompt(coverage, s.transcript()?));
        }
        Cmd::Act { file } => {
            let text = read_input(file)?;
            let requests: Vec<RevisionRequest> = match parse_json::<serde_json::Value>(&text, "action file")? {
                serde_json::Value::Array(items) => items
                    .into_iter()
                    .map(|v| serde_json::from_value(v).map_err(|e| usage(format!("action file: {e}"))))
                    .collect::<Result<_, _>>()?,
                single => vec![serde_json::from_value(single).map_err(|e| usage(format!("action file: {e}")))?],
            };
            // All or nothing: the file is saved only if every action applies.
            let mut s = app.load()?;
            let gateway = Gateway::mock(MockBackend::new());
            for (i, request) in requests.into_iter().enumerate() {
                let outcome = s.execute(Command::Revise { request }, &app.ctx(), &gateway).map_err(|e| {
                    let f = Failure::from(e);
                    Failure { message: format!("action {}: {}", i + 1, f.message), ..f }
                })?;
                if let Some(a) = outcome.action {
                    let target = a.target_id.as_ref().map_or_else(String::new, |t| format!(" {t}"));
                    println!("#{} {}{target}", a.sequence, a.kind);
                }
            }
            app.save(&s)?;
        }
        Cmd::Memo { kind, body } => {
            let kind = MemoKind::parse(kind).ok_or_else(|| usage(format!("unknown memo kind {kind}")))?;
            let (s, outcome) = app.execute(Command::RecordMemo { kind, body: body.clone(), links: vec![] })?;
            print_outcome(&s, &outcome);
        }
        Cmd::Reflect { positionality } => {
            let (s, outcome) = app.execute(Command::ReflexivePrompt { positionality: positionality.clone() })?;
            print_outcome(&s, &outcome);
        }
        Cmd::Summary { format } => {
            let s = app.load()?;
            let summary = s.action_summary();
            match format {
                Format::Csv => print!("{}", export::action_summary_csv(&summary)?),
                Format::Md => {
                    let (header, rows) = export::action_summary_rows(&summary);
                    print!("{}", export::table_markdown(&header, &rows));
                }
            }
        }
        Cmd::Export { what, format, output } => {
            let s = app.load()?;
            let text = match what {
                What::CodeLog => export::export_code_log(
                    &s,
                    match format {
                        Format::Csv => ExportFormat::Csv,
                        Format::Md => ExportFormat::Markdown,
                    },
                )?,
                What::Actions => export::action_summary_csv(&s.action_summary())?,
                What::Log => export::interaction_log_jsonl(&s)?,
                What::Trail => export::trail_jsonl(&s.trail)?,
                What::Report => s.report.clone().unwrap_or_else(|| interface::render_report(&s)),
                What::Session => interface::save_string(&s)?,
            };
            match output {
                Some(path) => std::fs::write(path, text).map_err(|e| io(path, e))?,
                None => print!("{text}"),
            }
        }
        Cmd::Replay { log, output } => {
            let entries = export::read_interaction_log_jsonl(&read_input(log)?)?;
            let s = replay(&entries, None)?;
            println!("{} replayed: {} entries, phase {}", s.id, entries.len(), s.current_phase().name());
            if let Some(path) = output {
                interface::save(&s, path)?;
            }
        }
        Cmd::Status => {
            let s = app.load()?;
            println!("session: {}", s.id);
            println!("phase: {}", s.current_phase().name());
            println!("verbatim codes: {}", s.codes.active_verbatim().count());
            println!("gerund codes: {}", s.codes.active_gerunds().count());
            println!("themes: {}", s.codes.active_themes().count());
            println!("revisions: {}", s.trail.len());
            println!("log entries: {}", s.interaction_log.len());
        }
        Cmd::Serve { bind } => {
            let mut config = app.config.clone();
            if let Some(b) = bind {
                config.bind = b.clone();
            }
            if let Some(f) = &app.cli.fixtures {
                config.fixtures_dir = Some(f.clone());
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| usage(e.to_string()))?;
            eprintln!("listening on {}", config.bind);
            runtime
                .block_on(thematic_server::serve(config))
                .map_err(|m| Failure { name: "ServeFailure".into(), message: m })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => match ServerConfig::from_file(path) {
            Ok(c) => c,
            Err(m) => {
                eprintln!("ConfigError: {m}");
                return ExitCode::FAILURE;
            }
        },
        None => ServerConfig::default(),
    };
    let actor = cli.actor.clone().unwrap_or_else(default_actor);
    let app = App { cli, config, actor };
    match run(&app) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}: {}", f.name, f.message);
            ExitCode::FAILURE
        }
    }
}
