use std::time::Duration;

use serde_json::json;

use super::{BackendConfig, CompletionBackend, LlmError};
use crate::http::{self, HttpError, RetryPolicy};
use crate::prompt::PromptInput;

/// Client for `POST /v1/chat/completions`. The rendered prompt is sent as a
/// single user message.
pub struct OpenAiChatBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    url: String,
}

impl OpenAiChatBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(name) => {
                Some(std::env::var(name).map_err(|_| LlmError::MissingApiKey(name.clone()))?)
            }
            None => None,
        };
        let client = http::build_client(Duration::from_secs(config.request_timeout_secs))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            url: http::endpoint_url(&config.base_url, "chat/completions"),
            config,
            client,
            api_key,
        })
    }
}

impl From<HttpError> for LlmError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Transport { .. } => LlmError::Transport(e.to_string()),
            HttpError::Status { status, body } => LlmError::HttpStatus { status, body },
            HttpError::Malformed(m) => LlmError::MalformedResponse(m),
        }
    }
}

impl CompletionBackend for OpenAiChatBackend {
    fn cache_identity(&self) -> String {
        format!(
            "openai|model={}|temperature={}|max_tokens={}",
            self.config.model_name, self.config.temperature, self.config.max_tokens
        )
    }

    fn complete(&self, prompt: &PromptInput) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{ "role": "user", "content": prompt.rendered }],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        });
        let response = http::post_json(
            &self.client,
            &self.url,
            self.api_key.as_deref(),
            &body,
            RetryPolicy {
                max_retries: self.config.max_retries,
                initial_backoff: Duration::from_millis(self.config.retry_backoff_ms),
            },
        )?;
        response
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_owned)
            .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
    }
}
