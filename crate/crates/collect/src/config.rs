use std::fmt;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;
use url::Url;

/// Environment variable read for the bearer token.
pub const API_KEY_ENV: &str = "CEBAG_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid base_url {url:?}: {reason}")]
    BaseUrl { url: String, reason: String },
    #[error("max_in_flight must be at least 1")]
    ZeroInFlight,
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("model_name must not be empty")]
    EmptyModel,
    #[error("cannot read API key file {path}: {source}")]
    KeyFile { path: String, source: std::io::Error },
    #[error("API key file {0} is empty")]
    EmptyKeyFile(String),
    #[error("cannot build HTTP client: {0}")]
    Client(String),
}

/// Bearer token. Never printed by `Debug` or `Display`.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .map(|k| Self(k.trim().to_owned()))
    }

    /// First line of the file, surrounding whitespace removed.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::KeyFile {
            path: path.display().to_string(),
            source,
        })?;
        let key = raw.lines().next().unwrap_or("").trim();
        if key.is_empty() {
            return Err(ConfigError::EmptyKeyFile(path.display().to_string()));
        }
        Ok(Self(key.to_owned()))
    }

    pub(crate) fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    /// Prefix of the chat-completions route, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub api_key: Option<ApiKey>,
    pub model_name: String,
    /// Per-request timeout.
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Retries per request after the first attempt.
    pub retry_budget: u32,
    /// First retry delay; doubles on each further retry.
    pub retry_backoff: Duration,
    /// Log full request and response bodies instead of their hashes.
    pub log_bodies: bool,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model_name: model_name.into(),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
            retry_budget: 2,
            retry_backoff: Duration::from_millis(500),
            log_bodies: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.completions_url()?;
        if self.max_in_flight == 0 {
            return Err(ConfigError::ZeroInFlight);
        }
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        if self.model_name.trim().is_empty() {
            return Err(ConfigError::EmptyModel);
        }
        Ok(())
    }

    pub fn completions_url(&self) -> Result<Url, ConfigError> {
        let bad = |reason: &str| ConfigError::BaseUrl {
            url: self.base_url.clone(),
            reason: reason.to_owned(),
        };
        let base = Url::parse(&self.base_url).map_err(|e| bad(&e.to_string()))?;
        if !matches!(base.scheme(), "http" | "https") {
            return Err(bad("scheme must be http or https"));
        }
        if base.host_str().is_none() {
            return Err(bad("missing host"));
        }
        if base.query().is_some() || base.fragment().is_some() {
            return Err(bad("query and fragment are not allowed"));
        }
        let joined = format!("{}/chat/completions", base.as_str().trim_end_matches('/'));
        Url::parse(&joined).map_err(|e| bad(&e.to_string()))
    }

    /// Delay before retry number `retry` (1-based), capped at 30 s.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32 << retry.saturating_sub(1).min(16);
        self.retry_backoff.saturating_mul(factor).min(Duration::from_secs(30))
    }
}
