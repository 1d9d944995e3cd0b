//! Outbound chat-completion backends.
//!
//! [`ChatBackend`] abstracts the wire so the pipeline runs identically
//! against a live HTTP endpoint or the mock backends used in tests and
//! desk runs. Errors are pre-classified into retryable transport failures,
//! non-retryable credential failures, and content problems.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AgentRole, VlmRequest};

/// Token counts reported by the backend for one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

/// One backend reply.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub usage: TokenUsage,
    /// True when the model stopped because of an output-length limit.
    pub truncated: bool,
}

/// Failure classification driving the retry policy.
#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    /// Transient transport problem; retried with backoff.
    #[error("transport failure: {0}")]
    Transport(String),
    /// Authentication problem; never retried.
    #[error("credential failure: {0}")]
    Credential(String),
    /// The call succeeded at the transport level but the content is
    /// unusable; never retried.
    #[error("content failure: {0}")]
    Content(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &VlmRequest) -> Result<BackendResponse, BackendError>;
    fn name(&self) -> &'static str;
}

/// Connection settings for the chat-completions HTTP backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer credential.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o".to_string(),
            api_key_env: "PREFCAL_API_KEY".to_string(),
            timeout_secs: 120,
        }
    }
}

/// Chat-completions HTTP client speaking the widely used messages schema
/// with image attachments as URLs or base64 data.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::Credential(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
        })
    }

    fn request_body(&self, request: &VlmRequest) -> serde_json::Value {
        let mut content = vec![json!({ "type": "text", "text": request.prompt })];
        for image in &request.images {
            content.push(json!({
                "type": "image_url",
                "image_url": { "url": image.as_url() }
            }));
        }
        json!({
            "model": self.config.model,
            "temperature": request.temperature,
            "messages": [{ "role": "user", "content": content }],
        })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &VlmRequest) -> Result<BackendResponse, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let response = self
            .agent
            .post(&url)
            .header("authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.request_body(request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;

        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(BackendError::Credential(format!(
                    "endpoint rejected credentials (HTTP {status})"
                )))
            }
            408 | 429 | 500..=599 => {
                return Err(BackendError::Transport(format!("HTTP {status}")))
            }
            other => {
                return Err(BackendError::Content(format!(
                    "endpoint returned HTTP {other}"
                )))
            }
        }

        let value: serde_json::Value = response
            .into_body()
            .read_json()
            .map_err(|e| BackendError::Content(format!("unparseable response body: {e}")))?;
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::Content("response has no choices".to_string()))?;
        let text = choice
            .pointer("/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| BackendError::Content("response has no message content".to_string()))?
            .to_string();
        let truncated = choice
            .get("finish_reason")
            .and_then(|r| r.as_str())
            .map(|r| r == "length")
            .unwrap_or(false);
        let usage = TokenUsage {
            input: value
                .pointer("/usage/prompt_tokens")
                .and_then(|v| v.as_u64())
                .unwrap_or(0),
            output: value
                .pointer("/usage/completion_tokens")
                .and_then(|v| v.as_u64())
                .unwrap_or(0),
        };
        Ok(BackendResponse {
            text,
            usage,
            truncated,
        })
    }

    fn name(&self) -> &'static str {
        "http"
    }
}

/// Suggested temperature for a role, matching the pipeline defaults.
pub fn default_temperature(role: AgentRole) -> f64 {
    match role {
        AgentRole::Observer => 0.3,
        AgentRole::Debater => 0.5,
        AgentRole::Judge => 0.1,
        AgentRole::Single => 0.0,
        AgentRole::Miner => 0.9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ImageRef;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn one_shot_server(status: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 65536];
                let _ = stream.read(&mut buf);
                let response = format!(
                    "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}")
    }

    fn request() -> VlmRequest {
        VlmRequest::new(
            "prompt".to_string(),
            vec![ImageRef::url("image://x")],
            0.0,
            AgentRole::Single,
        )
        .unwrap()
    }

    #[test]
    fn http_backend_parses_completion() {
        let base = one_shot_server(
            "200 OK",
            r#"{"choices":[{"message":{"content":"hello"},"finish_reason":"stop"}],"usage":{"prompt_tokens":778,"completion_tokens":278}}"#,
        );
        std::env::set_var("PREFCAL_TEST_KEY_A", "k");
        let backend = HttpBackend::new(HttpBackendConfig {
            base_url: base,
            api_key_env: "PREFCAL_TEST_KEY_A".to_string(),
            ..Default::default()
        })
        .unwrap();
        let response = backend.complete(&request()).unwrap();
        assert_eq!(response.text, "hello");
        assert_eq!(response.usage.input, 778);
        assert_eq!(response.usage.output, 278);
        assert!(!response.truncated);
    }

    #[test]
    fn http_backend_classifies_auth_failures() {
        let base = one_shot_server("401 Unauthorized", "{}");
        std::env::set_var("PREFCAL_TEST_KEY_B", "k");
        let backend = HttpBackend::new(HttpBackendConfig {
            base_url: base,
            api_key_env: "PREFCAL_TEST_KEY_B".to_string(),
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            backend.complete(&request()),
            Err(BackendError::Credential(_))
        ));
    }

    #[test]
    fn http_backend_classifies_server_errors_as_transport() {
        let base = one_shot_server("503 Service Unavailable", "{}");
        std::env::set_var("PREFCAL_TEST_KEY_C", "k");
        let backend = HttpBackend::new(HttpBackendConfig {
            base_url: base,
            api_key_env: "PREFCAL_TEST_KEY_C".to_string(),
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            backend.complete(&request()),
            Err(BackendError::Transport(_))
        ));
    }

    #[test]
    fn missing_credential_is_reported() {
        let result = HttpBackend::new(HttpBackendConfig {
            api_key_env: "PREFCAL_DEFINITELY_UNSET".to_string(),
            ..Default::default()
        });
        match result {
            Err(BackendError::Credential(message)) => {
                assert!(message.contains("PREFCAL_DEFINITELY_UNSET"))
            }
            Err(other) => panic!("expected credential error, got {other:?}"),
            Ok(_) => panic!("expected credential error"),
        }
    }

    #[test]
    fn truncated_response_is_flagged() {
        let base = one_shot_server(
            "200 OK",
            r#"{"choices":[{"message":{"content":"cut"},"finish_reason":"length"}],"usage":{"prompt_tokens":10,"completion_tokens":2}}"#,
        );
        std::env::set_var("PREFCAL_TEST_KEY_D", "k");
        let backend = HttpBackend::new(HttpBackendConfig {
            base_url: base,
            api_key_env: "PREFCAL_TEST_KEY_D".to_string(),
            ..Default::default()
        })
        .unwrap();
        assert!(backend.complete(&request()).unwrap().truncated);
    }
}
