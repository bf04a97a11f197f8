//! Completion backends, label parsing and the response cache.

mod cache;
mod mock;
#[cfg(feature = "native")]
mod openai;

pub use cache::ResponseCache;
pub use mock::{mock_complete, mock_correct_probability, MockBackend, MockBackendConfig};
#[cfg(feature = "native")]
pub use openai::OpenAiChatBackend;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptInput;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("mock backend needs a gold label in the label set for {0}")]
    MissingGold(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

/// Settings for an OpenAI-compatible chat completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

fn default_max_tokens() -> u32 {
    10
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

impl BackendConfig {
    pub fn new(base_url: &str, model_name: &str) -> Self {
        Self {
            base_url: base_url.to_owned(),
            model_name: model_name.to_owned(),
            api_key_env: None,
            max_tokens: default_max_tokens(),
            temperature: 0.0,
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_tokens < 1 {
            return Err(LlmError::Config("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// A completion parsed against a label set. `label == None` is INVALID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub raw_text: String,
    pub label: Option<String>,
}

impl ParsedPrediction {
    pub fn is_invalid(&self) -> bool {
        self.label.is_none()
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Maps free text onto a label.
///
/// The text is trimmed and lowercased. An exact match (ignoring leading and
/// trailing punctuation) wins. Otherwise the label occurring earliest as a
/// whole word wins, with ties going to the label listed first. Anything else
/// is INVALID.
pub fn parse_label(raw: &str, label_set: &[String]) -> ParsedPrediction {
    let text = raw.trim().to_lowercase();
    let bare = text.trim_matches(|c: char| !c.is_alphanumeric());
    let mut label = label_set.iter().find(|l| l.as_str() == bare).cloned();
    if label.is_none() {
        let mut best: Option<(usize, &String)> = None;
        for l in label_set.iter().filter(|l| !l.is_empty()) {
            let hit = text.match_indices(l.as_str()).find(|(start, m)| {
                let before = text[..*start].chars().next_back();
                let after = text[start + m.len()..].chars().next();
                !is_word_char(before) && !is_word_char(after)
            });
            if let Some((pos, _)) = hit {
                if best.is_none_or(|(b, _)| pos < b) {
                    best = Some((pos, l));
                }
            }
        }
        label = best.map(|(_, l)| l.clone());
    }
    ParsedPrediction {
        raw_text: raw.to_owned(),
        label,
    }
}

/// Anything that turns a rendered prompt into completion text.
pub trait CompletionBackend: Send + Sync {
    /// Model name plus every decoding parameter that affects the output.
    fn cache_identity(&self) -> String;
    fn complete(&self, prompt: &PromptInput) -> Result<String, LlmError>;
}

/// A backend fronted by an optional response cache. Cache hits never reach
/// the backend.
pub struct CachedBackend<B> {
    inner: B,
    cache: Option<ResponseCache>,
    backend_calls: AtomicUsize,
}

impl<B: CompletionBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: Option<ResponseCache>) -> Self {
        Self {
            inner,
            cache,
            backend_calls: AtomicUsize::new(0),
        }
    }

    /// Requests that missed the cache and went to the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, prompt: &PromptInput) -> Result<String, LlmError> {
        let key = self
            .cache
            .as_ref()
            .map(|_| ResponseCache::key(&self.inner.cache_identity(), &prompt.rendered));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key)? {
                return Ok(hit);
            }
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let text = self.inner.complete(prompt)?;
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            cache.put(key, &text)?;
        }
        Ok(text)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn cache_identity(&self) -> String {
        (**self).cache_identity()
    }

    fn complete(&self, prompt: &PromptInput) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}
