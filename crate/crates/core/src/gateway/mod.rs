//! Model-completion client: prompt templates plus live, replay and record
//! backends behind one trait.

#[cfg(feature = "live")]
mod live;
mod replay;
mod templates;

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "live")]
pub use live::LiveBackend;
pub use replay::{FixtureEntry, RecordBackend, ReplayBackend};
pub use templates::{
    check_reply, fenced_block, Contract, PromptTemplate, Rendered, TemplateId, PLACEHOLDER,
};

pub const ENV_URL: &str = "NC2C_API_URL";
pub const ENV_KEY: &str = "NC2C_API_KEY";
pub const ENV_MODEL: &str = "NC2C_MODEL";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("template {template} has {count} `$input$` placeholders, expected exactly one")]
    Placeholder { template: TemplateId, count: usize },
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("no fixture for {template} with prompt hash {hash}")]
    FixtureMiss { template: String, hash: String },
    #[error("reply violates the {contract:?} contract: {excerpt:?}")]
    ContractViolation { contract: Contract, excerpt: String },
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("fixture I/O: {0}")]
    Io(String),
}

/// Anything that can answer a rendered prompt.
pub trait Backend: Send + Sync {
    fn send(&self, prompt: &Rendered) -> Result<String, GatewayError>;
}

/// The interface the rest of the crate uses. Replies are already checked
/// against the template's contract.
pub trait ModelGateway: Send + Sync {
    fn complete(&self, template: &PromptTemplate, input: &str) -> Result<String, GatewayError>;

    fn complete_builtin(&self, id: TemplateId, input: &str) -> Result<String, GatewayError> {
        self.complete(&PromptTemplate::builtin(id), input)
    }

    fn transcript(&self) -> Vec<TranscriptEntry> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub template: String,
    pub prompt_sha256: String,
    pub reply: String,
    pub latency_ms: f64,
}

/// A backend plus an append-only transcript.
pub struct Gateway {
    backend: Box<dyn Backend>,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Gateway {
            backend: Box::new(backend),
            transcript: Mutex::new(Vec::new()),
        }
    }
}

impl ModelGateway for Gateway {
    fn complete(&self, template: &PromptTemplate, input: &str) -> Result<String, GatewayError> {
        let prompt = template.render(input);
        let started = Instant::now();
        let reply = self.backend.send(&prompt)?;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        self.transcript
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(TranscriptEntry {
                template: template.id.as_str().to_string(),
                prompt_sha256: prompt.sha256(),
                reply: reply.clone(),
                latency_ms,
            });
        check_reply(template.contract, &reply)
    }

    fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}

/// Replies from a fixed list, in order, wrapping around. Useful for tests
/// and for wiring canned answers into a run.
pub struct ScriptedBackend {
    replies: Vec<String>,
    next: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        ScriptedBackend {
            replies: replies.into_iter().map(Into::into).collect(),
            next: Mutex::new(0),
        }
    }
}

impl Backend for ScriptedBackend {
    fn send(&self, _prompt: &Rendered) -> Result<String, GatewayError> {
        if self.replies.is_empty() {
            return Err(GatewayError::Config(
                "scripted backend has no replies".into(),
            ));
        }
        let mut i = self.next.lock().unwrap_or_else(|e| e.into_inner());
        let reply = self.replies[*i % self.replies.len()].clone();
        *i += 1;
        Ok(reply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Replay,
    Record,
}

/// How to reach a model. The API key is never stored, only the name of the
/// environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub endpoint: Option<String>,
    pub api_key_env: String,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub fixture: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: Mode::Replay,
            endpoint: None,
            api_key_env: ENV_KEY.to_string(),
            model: None,
            timeout_secs: 60,
            max_retries: 2,
            fixture: None,
        }
    }
}

impl GatewayConfig {
    /// Parse a TOML config; endpoint and model fall back to the
    /// `NC2C_API_URL` / `NC2C_MODEL` environment variables.
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let mut cfg: GatewayConfig =
            toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        if cfg.endpoint.is_none() {
            cfg.endpoint = std::env::var(ENV_URL).ok();
        }
        if cfg.model.is_none() {
            cfg.model = std::env::var(ENV_MODEL).ok();
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if matches!(self.mode, Mode::Replay | Mode::Record) && self.fixture.is_none() {
            return Err(GatewayError::Config(
                "replay and record modes need a fixture path".into(),
            ));
        }
        if matches!(self.mode, Mode::Live | Mode::Record) {
            if self.endpoint.is_none() {
                return Err(GatewayError::Config(format!(
                    "live mode needs an endpoint (set {ENV_URL})"
                )));
            }
            if self.api_key_env.is_empty() {
                return Err(GatewayError::Config(
                    "live mode needs an API key variable name".into(),
                ));
            }
        }
        if self.timeout_secs == 0 {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Gateway, GatewayError> {
        self.validate()?;
        match self.mode {
            Mode::Replay => Ok(Gateway::new(ReplayBackend::load(
                self.fixture.as_ref().unwrap(),
            )?)),
            #[cfg(feature = "live")]
            Mode::Live => Ok(Gateway::new(LiveBackend::from_config(self)?)),
            #[cfg(feature = "live")]
            Mode::Record => Ok(Gateway::new(RecordBackend::new(
                LiveBackend::from_config(self)?,
                self.fixture.clone().unwrap(),
            ))),
            #[cfg(not(feature = "live"))]
            Mode::Live | Mode::Record => Err(GatewayError::Config(
                "built without the live backend".into(),
            )),
        }
    }
}
