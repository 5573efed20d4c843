//! Service configuration from `NUTRILOG_*` environment variables.

use std::env;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::FixedOffset;
use nutrilog_core::gateway::{Gateway, PromptCatalog, ProviderConfig, RetryPolicy};
use nutrilog_core::persistence::{FsObjectStore, MediaStore, MemoryObjectStore, Store, DEFAULT_MEDIA_CAP_BYTES};
use nutrilog_core::pipeline::{Pipeline, PipelineConfig};
use nutrilog_core::vector_store::{EmbeddingRow, VectorStore};
use thiserror::Error;

use crate::AppState;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_EMBEDDING_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("bad value for {var}: {message}")]
    Invalid { var: &'static str, message: String },
    #[error("cannot open the store: {0}")]
    Store(String),
    #[error("cannot open media storage: {0}")]
    Media(String),
    #[error("cannot load the embedding index: {0}")]
    Vectors(String),
    #[error("cannot configure the model provider: {0}")]
    Provider(String),
    #[error("cannot load prompt templates: {0}")]
    Prompts(String),
}

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    /// SQLite file; in-memory when unset.
    pub db_path: Option<PathBuf>,
    /// Media directory; in-memory when unset.
    pub media_dir: Option<PathBuf>,
    /// Saved embedding index; falls back to the store's embedding table.
    pub vector_dir: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub embedding_dim: usize,
    pub media_cap_bytes: usize,
    pub provider: ProviderConfig,
    pub pipeline: PipelineConfig,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            bind: DEFAULT_BIND.parse().expect("valid default address"),
            db_path: None,
            media_dir: None,
            vector_dir: None,
            prompt_dir: None,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            media_cap_bytes: DEFAULT_MEDIA_CAP_BYTES,
            provider: ProviderConfig::mock(),
            pipeline: PipelineConfig::default(),
        }
    }
}

fn var(name: &'static str) -> Option<String> {
    env::var(name).ok().filter(|v| !v.trim().is_empty())
}

fn parsed<T: std::str::FromStr>(name: &'static str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match var(name) {
        None => Ok(None),
        Some(v) => v.trim().parse().map(Some).map_err(|e: T::Err| ConfigError::Invalid {
            var: name,
            message: format!("`{v}`: {e}"),
        }),
    }
}

impl ApiConfig {
    /// Reads `NUTRILOG_BIND`, `NUTRILOG_DB`, `NUTRILOG_MEDIA_DIR`,
    /// `NUTRILOG_VECTOR_DIR`, `NUTRILOG_PROMPT_DIR`, `NUTRILOG_EMBEDDING_DIM`,
    /// `NUTRILOG_MEDIA_CAP_BYTES`, `NUTRILOG_RAG_K`, `NUTRILOG_MAX_TURNS`,
    /// `NUTRILOG_RECEIPT_WINDOW_DAYS`, `NUTRILOG_IN_FLIGHT_LIMIT`,
    /// `NUTRILOG_UTC_OFFSET_MINUTES` and the provider variables.
    pub fn from_env() -> Result<Self, ConfigError> {
        let mut cfg = ApiConfig::default();
        if let Some(v) = parsed("NUTRILOG_BIND")? {
            cfg.bind = v;
        }
        cfg.db_path = var("NUTRILOG_DB").map(PathBuf::from);
        cfg.media_dir = var("NUTRILOG_MEDIA_DIR").map(PathBuf::from);
        cfg.vector_dir = var("NUTRILOG_VECTOR_DIR").map(PathBuf::from);
        cfg.prompt_dir = var("NUTRILOG_PROMPT_DIR").map(PathBuf::from);
        if let Some(v) = parsed("NUTRILOG_EMBEDDING_DIM")? {
            cfg.embedding_dim = v;
        }
        if let Some(v) = parsed("NUTRILOG_MEDIA_CAP_BYTES")? {
            cfg.media_cap_bytes = v;
        }
        if let Some(v) = parsed("NUTRILOG_RAG_K")? {
            cfg.pipeline.rag_k = v;
        }
        if let Some(v) = parsed("NUTRILOG_MAX_TURNS")? {
            cfg.pipeline.max_turns = v;
        }
        if let Some(v) = parsed("NUTRILOG_RECEIPT_WINDOW_DAYS")? {
            cfg.pipeline.receipt_window_days = v;
        }
        if let Some(v) = parsed("NUTRILOG_IN_FLIGHT_LIMIT")? {
            cfg.pipeline.in_flight_limit = v;
        }
        if let Some(minutes) = parsed::<i32>("NUTRILOG_UTC_OFFSET_MINUTES")? {
            cfg.pipeline.local_offset = offset_from_minutes(minutes).ok_or(ConfigError::Invalid {
                var: "NUTRILOG_UTC_OFFSET_MINUTES",
                message: format!("{minutes} is out of range"),
            })?;
        }
        cfg.provider = ProviderConfig::from_env().map_err(ConfigError::Provider)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.embedding_dim == 0 {
            return Err(ConfigError::Invalid {
                var: "NUTRILOG_EMBEDDING_DIM",
                message: "must be positive".into(),
            });
        }
        if self.media_cap_bytes == 0 {
            return Err(ConfigError::Invalid {
                var: "NUTRILOG_MEDIA_CAP_BYTES",
                message: "must be positive".into(),
            });
        }
        if self.pipeline.in_flight_limit == 0 {
            return Err(ConfigError::Invalid {
                var: "NUTRILOG_IN_FLIGHT_LIMIT",
                message: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Opens every backing store. Any unreachable one is an error.
    pub fn build_state(&self) -> Result<AppState, ConfigError> {
        self.validate()?;
        let store = Store::open_migrated(self.db_path.as_deref()).map_err(|e| ConfigError::Store(e.to_string()))?;
        store.ping().map_err(|e| ConfigError::Store(e.to_string()))?;
        let media = match &self.media_dir {
            Some(dir) => {
                let backend = FsObjectStore::new(dir).map_err(|e| ConfigError::Media(format!("{}: {e}", dir.display())))?;
                MediaStore::new(Arc::new(backend), self.media_cap_bytes)
            }
            None => MediaStore::new(Arc::new(MemoryObjectStore::new()), self.media_cap_bytes),
        };
        let vectors = match &self.vector_dir {
            Some(dir) => VectorStore::load(dir).map_err(|e| ConfigError::Vectors(format!("{}: {e}", dir.display())))?,
            None => {
                let mut vs = VectorStore::new(self.embedding_dim).map_err(|e| ConfigError::Vectors(e.to_string()))?;
                let rows = store.load_embeddings().map_err(|e| ConfigError::Vectors(e.to_string()))?;
                vs.ingest(rows.into_iter().map(|r| EmbeddingRow {
                    food_id: r.food_id,
                    vector: r.vector,
                    food_label: r.food_label,
                    nutrition: r.nutrition,
                }))
                .map_err(|e| ConfigError::Vectors(e.to_string()))?;
                vs
            }
        };
        if vectors.dim() != self.embedding_dim {
            return Err(ConfigError::Vectors(format!(
                "index has dimension {}, configured {}",
                vectors.dim(),
                self.embedding_dim
            )));
        }
        let provider = self
            .provider
            .build(self.embedding_dim)
            .map_err(|e| ConfigError::Provider(e.to_string()))?;
        let mut gateway = Gateway::new(provider).with_retry(RetryPolicy {
            max_retries: self.provider.max_retries,
            ..RetryPolicy::default()
        });
        if let Some(dir) = &self.prompt_dir {
            let catalog = PromptCatalog::from_dir(dir).map_err(|e| ConfigError::Prompts(e.to_string()))?;
            gateway = gateway.with_catalog(catalog);
        }
        let pipeline = Pipeline::new(
            Arc::new(store),
            media,
            gateway,
            Arc::new(vectors),
            self.pipeline.clone(),
        );
        Ok(AppState::new(pipeline, self.media_cap_bytes))
    }
}

pub fn offset_from_minutes(minutes: i32) -> Option<FixedOffset> {
    FixedOffset::east_opt(minutes.checked_mul(60)?)
}
