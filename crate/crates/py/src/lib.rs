//! Python bindings: the `thematic` module.
//!
//! Structured values cross the boundary as plain Python dicts and lists (via
//! JSON), so requests can be written exactly like the service's JSON bodies.
//! Engine failures raise `ThematicError(name, message)`.

use std::path::PathBuf;

use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thematic_core::integrity::{check_gerund as check_gerund_label, verify, GerundPolicy};
use thematic_core::interface::{self, export, ExportFormat};
use thematic_core::llm::{gateway_for, Gateway, MockBackend};
use thematic_core::workflow::{self, Approval, Command};
use thematic_core::{AnalysisSettings, CodingMode, Ctx, EngineError, Phase, RevisionRequest, Transcript};

pyo3::create_exception!(thematic, ThematicError, PyException, "Engine error; args are (name, message).");

fn engine_err(e: impl Into<EngineError>) -> PyErr {
    let e = e.into();
    ThematicError::new_err((e.name(), e.to_string()))
}

fn value_err(message: impl std::fmt::Display) -> PyErr {
    pyo3::exceptions::PyValueError::new_err(message.to_string())
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts a JSON string or any JSON-serializable Python value.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.cast::<PyString>() {
        s.to_str()?.to_owned()
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(value_err)
}

fn parse_phase(s: &str) -> PyResult<Phase> {
    s.parse().map_err(value_err)
}

/// One analysis session.
#[pyclass(name = "Session", module = "thematic")]
pub struct PySession {
    inner: workflow::Session,
    /// Mock fixtures used by `run_phase` and `reflect`.
    fixtures_dir: Option<PathBuf>,
}

impl PySession {
    fn gateway(&self, needs_model: bool) -> PyResult<Gateway> {
        if !needs_model {
            return Ok(Gateway::mock(MockBackend::new()));
        }
        gateway_for(&self.inner.llm_config, self.fixtures_dir.as_deref()).map_err(engine_err)
    }

    fn exec<'py>(&mut self, py: Python<'py>, command: Command, actor: &str) -> PyResult<Bound<'py, PyAny>> {
        let needs_model = matches!(command, Command::RunPhase | Command::ReflexivePrompt { .. });
        let gateway = self.gateway(needs_model)?;
        let outcome = self.inner.execute(command, &Ctx::now(actor), &gateway).map_err(engine_err)?;
        to_py(py, &outcome)
    }
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (research_question, actor, coding_mode = "exact_plus_descriptive", page_size = None, fixtures_dir = None))]
    fn new(
        research_question: &str,
        actor: &str,
        coding_mode: &str,
        page_size: Option<usize>,
        fixtures_dir: Option<PathBuf>,
    ) -> PyResult<Self> {
        let mode: CodingMode = serde_json::from_value(coding_mode.into()).map_err(value_err)?;
        let mut settings = AnalysisSettings::default();
        if let Some(n) = page_size {
            settings.page_size = n;
        }
        let inner = workflow::Session::create(research_question, mode, Default::default(), settings, &Ctx::now(actor))
            .map_err(engine_err)?;
        Ok(Self { inner, fixtures_dir })
    }

    #[staticmethod]
    #[pyo3(signature = (path, fixtures_dir = None))]
    fn load(path: PathBuf, fixtures_dir: Option<PathBuf>) -> PyResult<Self> {
        Ok(Self { inner: interface::load(&path).map_err(engine_err)?, fixtures_dir })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        interface::save(&self.inner, &path).map_err(engine_err)
    }

    /// The session file contents.
    fn dumps(&self) -> PyResult<String> {
        interface::save_string(&self.inner).map_err(engine_err)
    }

    #[staticmethod]
    fn loads(text: &str) -> PyResult<Self> {
        Ok(Self { inner: interface::load_str(text).map_err(engine_err)?, fixtures_dir: None })
    }

    #[setter]
    fn set_fixtures_dir(&mut self, dir: Option<PathBuf>) {
        self.fixtures_dir = dir;
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.to_string()
    }

    #[getter]
    fn phase(&self) -> &'static str {
        self.inner.current_phase().name()
    }

    #[getter]
    fn research_question(&self) -> String {
        self.inner.research_question.clone()
    }

    /// Runs any engine command given as a dict, e.g. `{"command": "run_phase"}`.
    fn execute<'py>(&mut self, py: Python<'py>, command: &Bound<'py, PyAny>, actor: &str) -> PyResult<Bound<'py, PyAny>> {
        let command: Command = from_py(command)?;
        self.exec(py, command, actor)
    }

    fn load_transcript<'py>(
        &mut self,
        py: Python<'py>,
        title: &str,
        text: &str,
        actor: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        self.exec(py, Command::LoadTranscript { title: title.into(), text: text.into() }, actor)
    }

    /// Advances to `to` with `actor`'s approval.
    fn approve<'py>(&mut self, py: Python<'py>, to: &str, actor: &str) -> PyResult<Bound<'py, PyAny>> {
        let approval = Approval { actor: actor.into(), to: parse_phase(to)? };
        self.exec(py, Command::Advance { approval: Some(approval) }, actor)
    }

    #[pyo3(signature = (to, actor, rationale = ""))]
    fn revert<'py>(&mut self, py: Python<'py>, to: &str, actor: &str, rationale: &str) -> PyResult<Bound<'py, PyAny>> {
        self.exec(py, Command::Revert { to: parse_phase(to)?, rationale: rationale.into() }, actor)
    }

    fn run_phase<'py>(&mut self, py: Python<'py>, actor: &str) -> PyResult<Bound<'py, PyAny>> {
        self.exec(py, Command::RunPhase, actor)
    }

    /// Applies one revision request, e.g. `{"kind": "Commenting", ...}`.
    fn revise<'py>(&mut self, py: Python<'py>, request: &Bound<'py, PyAny>, actor: &str) -> PyResult<Bound<'py, PyAny>> {
        let request: RevisionRequest = from_py(request)?;
        self.exec(py, Command::Revise { request }, actor)
    }

    fn validate_integrity<'py>(&mut self, py: Python<'py>, actor: &str) -> PyResult<Bound<'py, PyAny>> {
        self.exec(py, Command::ValidateIntegrity, actor)?;
        to_py(py, &self.inner.integrity_report)
    }

    fn audit_coverage<'py>(&mut self, py: Python<'py>, actor: &str) -> PyResult<Bound<'py, PyAny>> {
        self.exec(py, Command::AuditCoverage { include_statuses: None }, actor)?;
        to_py(py, &self.inner.coverage_report)
    }

    /// `{actor: (comments, insertions, deletions_and_rejections, refinements, total)}`.
    fn action_summary(&self) -> std::collections::BTreeMap<String, (usize, usize, usize, usize, usize)> {
        self.inner.action_summary().per_actor.iter().map(|(a, c)| (a.to_string(), c.as_tuple())).collect()
    }

    /// The code log, gerunds, families, themes and memos.
    fn codes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.codes)
    }

    fn trail<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.trail)
    }

    fn interaction_log<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.interaction_log.entries())
    }

    #[pyo3(signature = (format = "csv"))]
    fn export_code_log(&self, format: &str) -> PyResult<String> {
        let format: ExportFormat = format.parse().map_err(value_err)?;
        export::export_code_log(&self.inner, format).map_err(engine_err)
    }

    fn export_log(&self) -> PyResult<String> {
        export::interaction_log_jsonl(&self.inner).map_err(engine_err)
    }

    /// The final report, or a rendering of the current state before P6.
    fn report(&self) -> String {
        self.inner.report.clone().unwrap_or_else(|| interface::render_report(&self.inner))
    }

    /// Rebuilds the code log from its baseline and the revision trail.
    fn rebuild_matches(&self) -> PyResult<bool> {
        let rebuilt = thematic_core::revision::rebuild(&self.inner.base_log, &self.inner.trail).map_err(engine_err)?;
        Ok(rebuilt == self.inner.codes)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Session(id={:?}, phase={:?})", self.inner.id.to_string(), self.phase())
    }
}

/// Rebuilds a session from an exported interaction log.
#[pyfunction]
fn replay(log_jsonl: &str) -> PyResult<PySession> {
    let entries = export::read_interaction_log_jsonl(log_jsonl).map_err(engine_err)?;
    let inner = workflow::replay(&entries, None).map_err(engine_err)?;
    Ok(PySession { inner, fixtures_dir: None })
}

/// `(passes, diagnostic)` for a proposed gerund label.
#[pyfunction]
fn check_gerund(label: &str) -> (bool, String) {
    let c = check_gerund_label(label, &GerundPolicy::default());
    (c.passes, c.diagnostic)
}

/// Integrity verdict for a phrase against a transcript text.
#[pyfunction]
#[pyo3(signature = (phrase, transcript_text, page_size = 10))]
fn verify_phrase<'py>(py: Python<'py>, phrase: &str, transcript_text: &str, page_size: usize) -> PyResult<Bound<'py, PyAny>> {
    let t = Transcript::ingest(transcript_text, "transcript", page_size).map_err(engine_err)?;
    let settings = AnalysisSettings::default();
    to_py(py, &verify(phrase, &t, None, &settings.integrity()))
}

/// Candidates from a four-column code log CSV.
#[pyfunction]
fn import_code_log<'py>(py: Python<'py>, csv_text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &export::import_code_log(csv_text).map_err(engine_err)?)
}

#[pymodule]
pub fn thematic(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ThematicError", m.py().get_type::<ThematicError>())?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(check_gerund, m)?)?;
    m.add_function(wrap_pyfunction!(verify_phrase, m)?)?;
    m.add_function(wrap_pyfunction!(import_code_log, m)?)?;
    Ok(())
}
