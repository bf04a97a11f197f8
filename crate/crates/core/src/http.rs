//! Blocking JSON-over-HTTP with retries, shared by the OpenAI-compatible
//! chat and embedding clients.

use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .saturating_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX))
            .min(Duration::from_secs(60))
    }
}

pub fn build_client(timeout: Duration) -> Result<reqwest::blocking::Client, HttpError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| HttpError::Transport {
            attempts: 0,
            message: e.to_string(),
        })
}

/// Joins an OpenAI-style base URL (with or without a trailing `/v1`) and an
/// endpoint path such as `chat/completions`.
pub fn endpoint_url(base_url: &str, path: &str) -> String {
    let base = base_url.trim_end_matches('/');
    if base.ends_with("/v1") {
        format!("{base}/{path}")
    } else {
        format!("{base}/v1/{path}")
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// POSTs `body` and parses the JSON response. Transport errors, 429 and 5xx
/// responses are retried with exponential backoff.
pub fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
    policy: RetryPolicy,
) -> Result<Value, HttpError> {
    let mut attempt = 0u32;
    loop {
        let mut request = client.post(url).json(body);
        if let Some(key) = api_key {
            request = request.bearer_auth(key);
        }
        let outcome = request.send();
        let exhausted = attempt >= policy.max_retries;
        match outcome {
            Err(e) => {
                if exhausted {
                    return Err(HttpError::Transport {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    });
                }
            }
            Ok(response) => {
                let status = response.status().as_u16();
                let text = response.text().map_err(|e| HttpError::Transport {
                    attempts: attempt + 1,
                    message: e.to_string(),
                })?;
                if (200..300).contains(&status) {
                    return serde_json::from_str(&text)
                        .map_err(|e| HttpError::Malformed(format!("{e}: {}", truncate(&text))));
                }
                if !retryable(status) || exhausted {
                    return Err(HttpError::Status {
                        status,
                        body: truncate(&text),
                    });
                }
            }
        }
        std::thread::sleep(policy.backoff(attempt));
        attempt += 1;
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_urls() {
        assert_eq!(
            endpoint_url("http://h:1", "chat/completions"),
            "http://h:1/v1/chat/completions"
        );
        assert_eq!(
            endpoint_url("http://h:1/v1/", "embeddings"),
            "http://h:1/v1/embeddings"
        );
    }

    #[test]
    fn backoff_doubles_and_saturates() {
        let p = RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(100),
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(3), Duration::from_millis(800));
        assert_eq!(p.backoff(40), Duration::from_secs(60));
    }
}
