//! OpenAI-compatible chat-completions provider.

use std::sync::OnceLock;

use colleagues::config::API_KEY_ENV;
use colleagues::error::GatewayError;
use colleagues::gateway::CallParams;
use colleagues::{ChatProvider, PromptRequest, ProviderProfile};
use serde_json::{json, Value};

/// Sends each prompt as a single user message and returns the first
/// choice's content.
pub struct OpenAiProvider {
    endpoint: String,
    model: String,
    api_key: String,
    // built on first use so it is always created on a blocking thread
    client: OnceLock<reqwest::blocking::Client>,
}

impl OpenAiProvider {
    pub fn new(profile: &ProviderProfile, api_key: impl Into<String>) -> Self {
        Self {
            endpoint: profile.endpoint.clone(),
            model: profile.model_name.clone(),
            api_key: api_key.into(),
            client: OnceLock::new(),
        }
    }

    /// Reads the credential from the environment.
    pub fn from_env(profile: &ProviderProfile) -> Result<Self, GatewayError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(profile, key.trim())),
            _ => Err(GatewayError::Config(format!("{API_KEY_ENV} is not set"))),
        }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(reqwest::blocking::Client::new)
    }
}

/// Pulls `choices[0].message.content` out of a completion body.
pub fn completion_text(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.get("choices")?.get(0)?.get("message")?.get("content")?.as_str().map(str::to_string)
}

impl ChatProvider for OpenAiProvider {
    fn send(&self, req: &PromptRequest, params: &CallParams) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": req.text }],
            "temperature": params.temperature,
        });
        let resp = self
            .client()
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .timeout(params.timeout)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GatewayError::Timeout
                } else {
                    GatewayError::Transport(e.status().map_or(0, |s| s.as_u16()))
                }
            })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(GatewayError::RateLimited);
        }
        if !status.is_success() {
            return Err(GatewayError::Transport(status.as_u16()));
        }
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(0)
            }
        })?;
        completion_text(&text).ok_or(GatewayError::ParseFailure { raw_text: text })
    }
}
