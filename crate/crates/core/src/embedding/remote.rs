use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EmbeddingError, EmbeddingProvider};
use crate::http::{self, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEmbeddingConfig {
    pub base_url: String,
    pub model: String,
    pub dim: usize,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

/// Client for `POST /v1/embeddings` on an OpenAI-compatible server.
pub struct RemoteEmbeddingProvider {
    config: RemoteEmbeddingConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemoteEmbeddingProvider {
    pub fn new(config: RemoteEmbeddingConfig) -> Result<Self, EmbeddingError> {
        let client = http::build_client(Duration::from_secs(config.request_timeout_secs))
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok());
        Ok(Self {
            config,
            client,
            api_key,
        })
    }
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.config.base_url
    }

    fn model(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let body = json!({ "model": self.config.model, "input": text });
        let response = http::post_json(
            &self.client,
            &http::endpoint_url(&self.config.base_url, "embeddings"),
            self.api_key.as_deref(),
            &body,
            RetryPolicy {
                max_retries: self.config.max_retries,
                initial_backoff: Duration::from_millis(self.config.retry_backoff_ms),
            },
        )
        .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        let values = response
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| {
                EmbeddingError::ProviderUnavailable("response lacks data[0].embedding".into())
            })?;
        values
            .iter()
            .map(|x| {
                x.as_f64().ok_or_else(|| {
                    EmbeddingError::ProviderUnavailable("non-numeric embedding component".into())
                })
            })
            .collect()
    }
}
