//! Chat-completion client for a live model.

use std::sync::OnceLock;
use std::time::Duration;

use serde_json::{json, Value};
use wrangle_core::{LlmClient, LlmError, StageTag};

/// Posts each prompt as a single user message with deterministic sampling
/// settings and returns the first choice's content.
pub struct HttpLlm {
    endpoint: String,
    model: String,
    key: Option<String>,
    timeout: Duration,
    // Built on first use: a blocking client must not be created on an async
    // worker thread.
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpLlm {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, key: Option<String>) -> HttpLlm {
        HttpLlm {
            endpoint: endpoint.into(),
            model: model.into(),
            key,
            timeout: Duration::from_secs(120),
            client: OnceLock::new(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> HttpLlm {
        self.timeout = timeout;
        self
    }

    /// The JSON body sent for `prompt`.
    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "top_p": 1,
            "frequency_penalty": 0,
            "presence_penalty": 0,
        })
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, LlmError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let built = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(self.client.get_or_init(|| built))
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, stage: StageTag, prompt: &str) -> Result<String, LlmError> {
        log::debug!("model call for {stage}, {} prompt bytes", prompt.len());
        let mut request = self.client()?.post(&self.endpoint).json(&self.request_body(prompt));
        if let Some(key) = &self.key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        let body: Value = response.json().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Transport(format!("HTTP {status}: {body}")));
        }
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport(format!("no message content in {body}")))
    }
}
