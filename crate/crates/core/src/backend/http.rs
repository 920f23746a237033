//! Chat-completion HTTP backend.
//!
//! Speaks the widely implemented `POST {base_url}/chat/completions` shape:
//! one user message carrying the rendered prompt, with `max_tokens` and
//! `temperature`. The answer is the first choice's message content.

use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionResult, PromptRequest};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "HERA_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    /// Wait before the second attempt; doubles for each further attempt.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            attempts: 3,
            backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads the bearer token from [`API_KEY_ENV`].
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    max_tokens: u32,
    temperature: f32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Failure {
    Transient(String),
    Fatal(BackendError),
}

pub struct HttpBackend {
    client: Client,
    config: HttpConfig,
    name: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("http client: {e}")))?;
        let name = format!("http:{}", config.model);
        Ok(Self {
            client,
            config,
            name,
        })
    }

    fn attempt(&self, request: &PromptRequest) -> Result<(String, Usage), Failure> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.rendered_prompt,
            }],
            max_tokens: request.max_output_tokens,
            temperature: request.temperature,
        };
        let mut builder = self.client.post(self.config.endpoint()).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status();
        let payload = response
            .text()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        if !status.is_success() {
            return Err(if is_retryable(status) {
                Failure::Transient(format!("status {status}: {}", snippet(&payload)))
            } else {
                Failure::Fatal(BackendError::Rejected {
                    status: status.as_u16(),
                    message: snippet(&payload),
                })
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&payload).map_err(|e| {
            Failure::Fatal(BackendError::MalformedResponse(format!("{e}: {}", snippet(&payload))))
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Fatal(BackendError::MalformedResponse("no choices".into())))?
            .message
            .content
            .unwrap_or_default();
        Ok((text, parsed.usage.unwrap_or_default()))
    }
}

fn is_retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS
        || status == StatusCode::REQUEST_TIMEOUT
        || status.is_server_error()
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        let attempts = self.config.attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Ok((text, usage)) => {
                    return Ok(CompletionResult {
                        text,
                        backend_name: self.name.clone(),
                        from_cache: false,
                        latency_ms: started.elapsed().as_millis() as u64,
                        prompt_tokens: usage.prompt_tokens,
                        output_tokens: usage.completion_tokens,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(message)) => {
                    tracing::warn!(attempt, %message, "transient backend failure");
                    last_error = message;
                    if attempt < attempts {
                        thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(BackendError::Unreachable {
            attempts,
            message: last_error,
        })
    }
}
