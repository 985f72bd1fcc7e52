use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread::sleep;
use std::time::Duration;

use log::warn;
use rand::Rng;
use reqwest::blocking::Client;
use reqwest::header::{AUTHORIZATION, RETRY_AFTER};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatMessage, HarnessError};

fn default_max_parallel() -> usize {
    4
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_max_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

/// A model under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmTarget {
    pub name: String,
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl LlmTarget {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        LlmTarget {
            name: name.into(),
            endpoint: endpoint.into(),
            api_key_env: None,
            temperature: 0.0,
            max_parallel: default_max_parallel(),
            timeout_secs: default_timeout_secs(),
            max_tokens: None,
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("target name is empty".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("{}: temperature must be >= 0", self.name));
        }
        if self.max_parallel == 0 {
            return Err(format!("{}: max_parallel must be >= 1", self.name));
        }
        if self.max_attempts == 0 {
            return Err(format!("{}: max_attempts must be >= 1", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
}

/// Anything that can answer a chat prompt.
pub trait ChatBackend: Sync {
    fn model(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, HarnessError>;
    /// Requests actually sent (cache hits never reach the backend).
    fn calls(&self) -> usize;
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpChatClient {
    target: LlmTarget,
    http: Client,
    token: Option<String>,
    calls: AtomicUsize,
}

impl HttpChatClient {
    pub fn new(target: LlmTarget) -> Result<Self, HarnessError> {
        target.validate().map_err(HarnessError::Script)?;
        let token = match &target.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| HarnessError::Auth(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = Client::builder()
            .timeout(Duration::from_secs(target.timeout_secs))
            .build()
            .map_err(|e| HarnessError::Network(e.to_string()))?;
        Ok(HttpChatClient {
            target,
            http,
            token,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn target(&self) -> &LlmTarget {
        &self.target
    }

    fn body(&self, messages: &[ChatMessage]) -> Value {
        let mut body = json!({
            "model": self.target.name,
            "messages": messages,
            "temperature": self.target.temperature,
        });
        if let Some(n) = self.target.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    fn backoff(&self, attempt: u32, server_hint: Option<Duration>) -> Duration {
        if let Some(d) = server_hint {
            return d.min(Duration::from_secs(120));
        }
        let base = self.target.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
        let jitter = if self.target.backoff_ms > 0 {
            rand::thread_rng().gen_range(0..=self.target.backoff_ms / 2)
        } else {
            0
        };
        Duration::from_millis(base + jitter)
    }
}

/// First choice's text: `message.content`, or `text` on legacy completion
/// endpoints.
pub fn extract_completion_text(body: &str) -> Result<String, HarnessError> {
    let v: Value = serde_json::from_str(body).map_err(|e| HarnessError::MalformedResponse(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| HarnessError::MalformedResponse("no choices".into()))?;
    choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .or_else(|| choice.get("text").and_then(Value::as_str))
        .map(str::to_string)
        .ok_or_else(|| HarnessError::MalformedResponse("choice without content".into()))
}

impl ChatBackend for HttpChatClient {
    fn model(&self) -> &str {
        &self.target.name
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, HarnessError> {
        let body = self.body(messages);
        let max = self.target.max_attempts;
        for attempt in 1..=max {
            self.calls.fetch_add(1, Ordering::Relaxed);
            let mut req = self.http.post(&self.target.endpoint).json(&body);
            if let Some(token) = &self.token {
                req = req.header(AUTHORIZATION, format!("Bearer {token}"));
            }
            let last = attempt == max;
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let text = resp.text().map_err(|e| HarnessError::MalformedResponse(e.to_string()))?;
                        return extract_completion_text(&text).map(|text| Completion {
                            text,
                            retries: attempt - 1,
                        });
                    }
                    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                        return Err(HarnessError::Auth(format!("HTTP {status}")));
                    }
                    if status == StatusCode::TOO_MANY_REQUESTS {
                        if last {
                            return Err(HarnessError::RateLimited { attempts: attempt });
                        }
                        let hint = resp
                            .headers()
                            .get(RETRY_AFTER)
                            .and_then(|h| h.to_str().ok())
                            .and_then(|s| s.trim().parse::<f64>().ok())
                            .filter(|s| s.is_finite() && *s >= 0.0)
                            .map(Duration::from_secs_f64);
                        warn!("{}: rate limited (attempt {attempt})", self.target.name);
                        sleep(self.backoff(attempt, hint));
                        continue;
                    }
                    let body = resp.text().unwrap_or_default();
                    if status.is_server_error() && !last {
                        warn!("{}: HTTP {status} (attempt {attempt})", self.target.name);
                        sleep(self.backoff(attempt, None));
                        continue;
                    }
                    return Err(HarnessError::Http {
                        status: status.as_u16(),
                        body: body.chars().take(500).collect(),
                    });
                }
                Err(e) if e.is_timeout() => {
                    if last {
                        return Err(HarnessError::Timeout { attempts: attempt });
                    }
                    sleep(self.backoff(attempt, None));
                }
                Err(e) => {
                    if last {
                        return Err(HarnessError::Network(e.to_string()));
                    }
                    sleep(self.backoff(attempt, None));
                }
            }
        }
        unreachable!("max_attempts validated >= 1")
    }
}
