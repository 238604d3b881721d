use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, GatewayConfig, GatewayError, Rendered};

/// Chat-completion client: POSTs `{model, messages}` and reads the first
/// choice's message content.
pub struct LiveBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key_env: String,
    model: String,
    max_retries: u32,
}

impl LiveBackend {
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("missing endpoint".into()))?;
        Ok(LiveBackend {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(cfg.timeout_secs))
                .build(),
            endpoint,
            api_key_env: cfg.api_key_env.clone(),
            model: cfg.model.clone().unwrap_or_else(|| "default".into()),
            max_retries: cfg.max_retries,
        })
    }

    fn attempt(&self, body: &Value, key: &str) -> Result<String, GatewayError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {key}"))
            .send_json(body.clone());
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => return Err(GatewayError::Status(code)),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string().replace(key, "<redacted>");
                return Err(if msg.to_lowercase().contains("timed out") {
                    GatewayError::Timeout
                } else {
                    GatewayError::Network(msg)
                });
            }
        };
        let v: Value = resp
            .into_json()
            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BadResponse("no choices[0].message.content".into()))
    }
}

fn retryable(e: &GatewayError) -> bool {
    match e {
        GatewayError::Network(_) | GatewayError::Timeout => true,
        GatewayError::Status(code) => *code == 429 || *code >= 500,
        _ => false,
    }
}

impl Backend for LiveBackend {
    fn send(&self, prompt: &Rendered) -> Result<String, GatewayError> {
        let key = std::env::var(&self.api_key_env).map_err(|_| {
            GatewayError::Config(format!(
                "environment variable {} is not set",
                self.api_key_env
            ))
        })?;
        let mut messages = Vec::new();
        if let Some(s) = &prompt.system {
            messages.push(json!({"role": "system", "content": s}));
        }
        messages.push(json!({"role": "user", "content": prompt.user}));
        let body = json!({"model": self.model, "messages": messages});
        let mut last = GatewayError::Timeout;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * attempt as u64));
            }
            match self.attempt(&body, &key) {
                Ok(reply) => return Ok(reply),
                Err(e) if retryable(&e) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}
