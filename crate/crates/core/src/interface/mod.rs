//! Persistence, import/export formats and the final report.

pub mod export;
pub mod report;
pub mod store;

pub use export::{
    action_summary_csv, export_code_log, import_code_log, interaction_log_jsonl, parse_markdown_code_log,
    read_interaction_log_jsonl, CodeCandidate, ExportFormat,
};
pub use report::render_report;
pub use store::{load, load_str, save, save_string, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterfaceError {
    #[error("i/o failure: {0}")]
    IoFailure(String),
    #[error("session payload does not match its integrity hash")]
    HashMismatch,
    #[error("unsupported session format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("row {row} has {found} fields, expected {expected}")]
    RowArityError { row: usize, expected: usize, found: usize },
}

impl InterfaceError {
    pub fn name(&self) -> &'static str {
        match self {
            InterfaceError::IoFailure(_) => "IoFailure",
            InterfaceError::HashMismatch => "HashMismatch",
            InterfaceError::UnsupportedVersion(_) => "UnsupportedVersion",
            InterfaceError::Malformed(_) => "Malformed",
            InterfaceError::HeaderMismatch(_) => "HeaderMismatch",
            InterfaceError::RowArityError { .. } => "RowArityError",
        }
    }
}

impl From<std::io::Error> for InterfaceError {
    fn from(e: std::io::Error) -> Self {
        InterfaceError::IoFailure(e.to_string())
    }
}
