//! Service configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thematic_core::llm::LlmConfig;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    /// Sessions are saved here after every change and reloaded on start.
    pub data_dir: Option<PathBuf>,
    /// Fixture files for the mock backend.
    pub fixtures_dir: Option<PathBuf>,
    /// Backend selection and defaults for new sessions.
    pub llm: LlmConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bind: DEFAULT_BIND.into(), data_dir: None, fixtures_dir: None, llm: LlmConfig::default() }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text)
    }
}
