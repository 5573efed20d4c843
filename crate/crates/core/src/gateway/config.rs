use std::env;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{HttpProvider, MockProvider, ModelProvider, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Live,
    Mock,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(ProviderKind::Live),
            "mock" => Ok(ProviderKind::Mock),
            other => Err(format!("unknown provider kind `{other}` (expected live or mock)")),
        }
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_kind: ProviderKind,
    pub endpoint: String,
    pub credential: String,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl fmt::Debug for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderConfig")
            .field("provider_kind", &self.provider_kind)
            .field("endpoint", &self.endpoint)
            .field("credential", &"<redacted>")
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            provider_kind: ProviderKind::Mock,
            endpoint: "http://127.0.0.1:8500".to_string(),
            credential: String::new(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
        }
    }
}

impl ProviderConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    /// Defaults overridden by `NUTRILOG_PROVIDER`, `NUTRILOG_PROVIDER_ENDPOINT`,
    /// `NUTRILOG_PROVIDER_CREDENTIAL`, `NUTRILOG_PROVIDER_TIMEOUT_SECS` and
    /// `NUTRILOG_PROVIDER_MAX_RETRIES`.
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = Self::default();
        if let Ok(v) = env::var("NUTRILOG_PROVIDER") {
            cfg.provider_kind = v.parse()?;
        }
        if let Ok(v) = env::var("NUTRILOG_PROVIDER_ENDPOINT") {
            cfg.endpoint = v;
        }
        if let Ok(v) = env::var("NUTRILOG_PROVIDER_CREDENTIAL") {
            cfg.credential = v;
        }
        if let Ok(v) = env::var("NUTRILOG_PROVIDER_TIMEOUT_SECS") {
            let secs: f64 = v
                .parse()
                .map_err(|_| format!("bad NUTRILOG_PROVIDER_TIMEOUT_SECS `{v}`"))?;
            cfg.timeout = Duration::from_secs_f64(secs);
        }
        if let Ok(v) = env::var("NUTRILOG_PROVIDER_MAX_RETRIES") {
            cfg.max_retries = v
                .parse()
                .map_err(|_| format!("bad NUTRILOG_PROVIDER_MAX_RETRIES `{v}`"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout.is_zero() {
            return Err("provider timeout must be positive".into());
        }
        Ok(())
    }

    /// Instantiates the configured provider. The mock ignores endpoint and
    /// credential and embeds into `embedding_dim` dimensions.
    pub fn build(&self, embedding_dim: usize) -> Result<Arc<dyn ModelProvider>, ProviderError> {
        self.validate().map_err(ProviderError::Transport)?;
        Ok(match self.provider_kind {
            ProviderKind::Mock => Arc::new(MockProvider::new(embedding_dim)),
            ProviderKind::Live => Arc::new(HttpProvider::new(
                &self.endpoint,
                &self.credential,
                self.timeout,
            )?),
        })
    }
}
