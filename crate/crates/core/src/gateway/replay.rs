use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, GatewayError, Rendered};

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub template: String,
    pub prompt_sha256: String,
    pub reply: String,
}

impl FixtureEntry {
    pub fn for_prompt(prompt: &Rendered, reply: impl Into<String>) -> Self {
        FixtureEntry {
            template: prompt.template.as_str().to_string(),
            prompt_sha256: prompt.sha256(),
            reply: reply.into(),
        }
    }
}

/// Serves canned replies keyed by template id and prompt hash.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    entries: HashMap<(String, String), String>,
}

impl ReplayBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        ReplayBackend {
            entries: entries
                .into_iter()
                .map(|e| ((e.template, e.prompt_sha256), e.reply))
                .collect(),
        }
    }

    /// Parse JSON-lines fixture text. Blank lines are skipped; later entries
    /// win over earlier ones with the same key.
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: FixtureEntry = serde_json::from_str(line)
                .map_err(|err| GatewayError::Io(format!("fixture line {}: {err}", i + 1)))?;
            entries.push(e);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn send(&self, prompt: &Rendered) -> Result<String, GatewayError> {
        let key = (prompt.template.as_str().to_string(), prompt.sha256());
        self.entries
            .get(&key)
            .cloned()
            .ok_or(GatewayError::FixtureMiss {
                template: key.0,
                hash: key.1,
            })
    }
}

/// Forwards to another backend and appends every exchange to a fixture file.
pub struct RecordBackend<B> {
    inner: B,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<B: Backend> RecordBackend<B> {
    pub fn new(inner: B, path: PathBuf) -> Self {
        RecordBackend {
            inner,
            path,
            lock: Mutex::new(()),
        }
    }
}

impl<B: Backend> Backend for RecordBackend<B> {
    fn send(&self, prompt: &Rendered) -> Result<String, GatewayError> {
        let reply = self.inner.send(prompt)?;
        let line = serde_json::to_string(&FixtureEntry::for_prompt(prompt, reply.clone()))
            .map_err(|e| GatewayError::Io(e.to_string()))?;
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", self.path.display())))?;
        writeln!(f, "{line}").map_err(|e| GatewayError::Io(e.to_string()))?;
        Ok(reply)
    }
}
