//! Text-generation service clients, retry policy and request rate limiting.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

/// Anything that turns a prompt into generated text.
pub trait GenerationClient: Send + Sync {
    fn send(&self, prompt: &str) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service returned HTTP {0}")]
    Status(u16),
    #[error("could not decode service response: {0}")]
    Decode(String),
    #[error("service returned an empty completion")]
    Empty,
}

/// Request/response body shape spoken by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WireSchema {
    /// `{"model", "messages": [{"role": "user", "content"}]}` →
    /// `choices[0].message.content`
    #[default]
    ChatCompletions,
    /// `{"model", "prompt"}` → `text`
    Plain,
}

impl std::str::FromStr for WireSchema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chat" | "chat-completions" => Ok(Self::ChatCompletions),
            "plain" => Ok(Self::Plain),
            other => Err(format!("unknown wire schema {other:?} (expected chat or plain)")),
        }
    }
}

impl WireSchema {
    pub fn request(self, model: &str, prompt: &str) -> Value {
        match self {
            WireSchema::ChatCompletions => json!({
                "model": model,
                "messages": [{"role": "user", "content": prompt}],
            }),
            WireSchema::Plain => json!({"model": model, "prompt": prompt}),
        }
    }

    pub fn extract(self, body: &Value) -> Result<String, ClientError> {
        let text = match self {
            WireSchema::ChatCompletions => body.pointer("/choices/0/message/content").and_then(Value::as_str),
            WireSchema::Plain => body.get("text").and_then(Value::as_str),
        };
        match text {
            Some(t) if !t.trim().is_empty() => Ok(t.to_string()),
            Some(_) => Err(ClientError::Empty),
            None => Err(ClientError::Decode(format!("unexpected body: {body}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSettings {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub schema: WireSchema,
}

pub const ENV_URL: &str = "KERMIT_SERVICE_URL";
pub const ENV_KEY: &str = "KERMIT_SERVICE_KEY";
pub const ENV_MODEL: &str = "KERMIT_SERVICE_MODEL";

impl ServiceSettings {
    /// Endpoint, credential and model come from the environment only.
    pub fn from_env(timeout: Duration, schema: WireSchema) -> Result<Self, String> {
        let endpoint = std::env::var(ENV_URL).map_err(|_| format!("{ENV_URL} is not set"))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-3.5-turbo".to_string());
        Ok(Self {
            endpoint,
            api_key: std::env::var(ENV_KEY).ok(),
            model,
            timeout,
            schema,
        })
    }
}

/// Blocking HTTP JSON client.
pub struct HttpClient {
    settings: ServiceSettings,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(settings: ServiceSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { settings, agent }
    }
}

impl GenerationClient for HttpClient {
    fn send(&self, prompt: &str) -> Result<String, ClientError> {
        let mut req = self
            .agent
            .post(&self.settings.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.settings.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = self.settings.schema.request(&self.settings.model, prompt);
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ClientError::Status(status));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::Decode(e.to_string()))?;
        self.settings.schema.extract(&value)
    }
}

/// `max_retries` retries after the first attempt, with exponential backoff.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff(max_retries: u32) -> Self {
        Self {
            max_retries,
            initial_backoff: Duration::ZERO,
            multiplier: 1.0,
        }
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.multiplier.powi(retry.saturating_sub(1) as i32))
    }
}

/// Token bucket shared by all in-flight requests.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// `per_second` tokens refill continuously up to `burst`.
    pub fn new(per_second: f64, burst: u32) -> Self {
        assert!(per_second > 0.0, "rate must be positive");
        let capacity = f64::from(burst.max(1));
        Self {
            per_second,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available, then takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("rate limiter poisoned");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens =
                    (*tokens + now.duration_since(*last).as_secs_f64() * self.per_second).min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.per_second)
            };
            std::thread::sleep(wait);
        }
    }
}
