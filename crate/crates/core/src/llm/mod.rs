//! LLM gateway: prompt templates, chat backends and response parsers.
//!
//! Every call goes through a [`Gateway`], which stamps a deterministic request
//! hash on the exchange and bounds the number of requests in flight. Three
//! backends exist: [`backend::LiveBackend`] (OpenAI-compatible HTTP),
//! [`backend::MockBackend`] (fixtures keyed by request hash) and
//! [`backend::ReplayBackend`] (responses recorded in an interaction log).

pub mod backend;
pub mod parse;
pub mod prompt;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::phase::Phase;

pub use backend::{ChatBackend, InFlightLimiter, LiveBackend, MockBackend, ReplayBackend};
pub use parse::{CodeEntry, GerundMapping, ParsedCodes, ThemeProposal};
pub use prompt::{PromptTemplate, TemplateId};

pub const DEFAULT_SYSTEM_ROLE: &str =
    "You are a skilled qualitative researcher focusing on inductively emerging codes.";
pub const DEFAULT_TEMPERATURE: f64 = 0.3;
pub const DEFAULT_MAX_TOKENS: u32 = 1000;
pub const DEFAULT_API_KEY_ENV: &str = "THEMATIC_API_KEY";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("template placeholder `{0}` is not bound")]
    UnboundPlaceholder(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no mock fixture for request {0}")]
    MockFixtureMissing(String),
    #[error("authentication failed: {0}")]
    AuthenticationFailure(String),
    #[error("could not parse model response: {0}")]
    ParseError(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}

impl LlmError {
    pub fn name(&self) -> &'static str {
        match self {
            LlmError::UnboundPlaceholder(_) => "UnboundPlaceholder",
            LlmError::BackendUnavailable(_) => "BackendUnavailable",
            LlmError::MockFixtureMissing(_) => "MockFixtureMissing",
            LlmError::AuthenticationFailure(_) => "AuthenticationFailure",
            LlmError::ParseError(_) => "ParseError",
            LlmError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    #[default]
    Mock,
}

/// Sampling parameters that may differ per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub system_role: String,
    pub endpoint: String,
    pub backend: BackendKind,
    pub api_key_env: String,
    pub per_phase: BTreeMap<Phase, PhaseOverride>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            model_id: "gpt-4-turbo".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            system_role: DEFAULT_SYSTEM_ROLE.into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            backend: BackendKind::Mock,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            per_phase: BTreeMap::new(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let check = |t: f64, m: u32, what: &str| {
            if !(0.0..=2.0).contains(&t) {
                return Err(LlmError::InvalidConfig(format!("{what}temperature {t} outside [0, 2]")));
            }
            if m == 0 {
                return Err(LlmError::InvalidConfig(format!("{what}max_tokens must be at least 1")));
            }
            Ok(())
        };
        check(self.temperature, self.max_tokens, "")?;
        for (phase, o) in &self.per_phase {
            check(
                o.temperature.unwrap_or(self.temperature),
                o.max_tokens.unwrap_or(self.max_tokens),
                &format!("{phase} "),
            )?;
        }
        Ok(())
    }

    pub fn temperature_for(&self, phase: Phase) -> f64 {
        self.per_phase.get(&phase).and_then(|o| o.temperature).unwrap_or(self.temperature)
    }

    pub fn max_tokens_for(&self, phase: Phase) -> u32 {
        self.per_phase.get(&phase).and_then(|o| o.max_tokens).unwrap_or(self.max_tokens)
    }

    /// Builds the request for one rendered prompt in one phase.
    pub fn request(&self, template: TemplateId, phase: Phase, prompt: String) -> ChatRequest {
        ChatRequest {
            template,
            phase,
            system_role: self.system_role.clone(),
            prompt,
            model_id: self.model_id.clone(),
            temperature: self.temperature_for(phase),
            max_tokens: self.max_tokens_for(phase),
        }
    }
}

/// One two-message chat exchange, fully determined by its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub template: TemplateId,
    pub phase: Phase,
    pub system_role: String,
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Hex SHA-256 over the canonical JSON form of the request.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<Usage>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub request_hash: String,
    pub response_text: String,
    pub usage: Option<Usage>,
    pub timestamp: DateTime<Utc>,
}

/// Shared entry point for model calls.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    limiter: Arc<InFlightLimiter>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("backend", &self.backend.name()).finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self::with_limit(backend, DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_limit(backend: Arc<dyn ChatBackend>, max_in_flight: usize) -> Self {
        Self { backend, limiter: Arc::new(InFlightLimiter::new(max_in_flight)) }
    }

    pub fn mock(backend: MockBackend) -> Self {
        Self::new(Arc::new(backend))
    }

    /// Whether requests may be issued from several threads at once.
    pub fn supports_parallel(&self) -> bool {
        self.backend.supports_parallel()
    }

    pub fn complete(&self, request: &ChatRequest, at: DateTime<Utc>) -> Result<RawCompletion, LlmError> {
        let _permit = self.limiter.acquire();
        let reply = self.backend.complete(request)?;
        Ok(RawCompletion {
            request_hash: request.hash(),
            response_text: reply.text,
            usage: reply.usage,
            timestamp: at,
        })
    }
}

/// The gateway a config asks for. A mock backend serves the fixture files in
/// `fixtures_dir`, or nothing at all without one.
pub fn gateway_for(config: &LlmConfig, fixtures_dir: Option<&Path>) -> Result<Gateway, LlmError> {
    match config.backend {
        BackendKind::Live => Ok(Gateway::new(Arc::new(LiveBackend::from_config(config)?))),
        BackendKind::Mock => {
            let backend = match fixtures_dir {
                Some(dir) => MockBackend::from_dir(dir)
                    .map_err(|e| LlmError::BackendUnavailable(format!("{}: {e}", dir.display())))?,
                None => MockBackend::new(),
            };
            Ok(Gateway::mock(backend))
        }
    }
}
