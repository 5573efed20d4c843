//! Model provider abstraction and the operations built on it.
//!
//! [`ModelProvider`] is the transport seam: one completion call and one
//! embedding call. [`Gateway`] layers retries, response parsing, document
//! validation and the single repair round-trip on top of any provider.
//! [`MockProvider`] is a deterministic offline provider used by tests, the
//! evaluation harness and local demos.

mod category;
mod client;
mod config;
mod live;
mod mock;
mod prompts;
mod wire;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::SchemaError;

pub use category::QuestionCategory;
pub use client::{FollowUpReply, Gateway, ReceiptDraft, RetryPolicy};
pub use config::{ProviderConfig, ProviderKind};
pub use live::HttpProvider;
pub use mock::{MockProvider, MOCK_FIXTURE_PREFIX};
pub use prompts::{format_chat_history, ContextSections, PromptCatalog, PromptTemplate, TemplateError, PROMPT_VERSION};
pub use wire::{format_follow_up_line, parse_follow_up_line, WireError, MAX_OPTIONS, NO_QUESTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GenerateLog,
    FollowUp,
    ParseReceipt,
    ClassifyQuestion,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::GenerateLog => "generate_log",
            Task::FollowUp => "follow_up",
            Task::ParseReceipt => "parse_receipt",
            Task::ClassifyQuestion => "classify_question",
        }
    }

    pub fn accepts_media(self) -> bool {
        !matches!(self, Task::ClassifyQuestion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub role: Role,
    pub text: String,
}

impl HistoryEntry {
    pub fn user(text: impl Into<String>) -> Self {
        HistoryEntry {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        HistoryEntry {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

/// Uploaded media: a MIME type and the raw bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Media {
    pub mime: String,
    #[serde(with = "base64_bytes")]
    pub bytes: Vec<u8>,
}

impl Media {
    pub fn new(mime: impl Into<String>, bytes: Vec<u8>) -> Self {
        Media {
            mime: mime.into(),
            bytes,
        }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Media::new("text/plain", text.into().into_bytes())
    }

    /// The content as UTF-8 when the MIME type is textual.
    pub fn as_text(&self) -> Option<&str> {
        if self.mime.starts_with("text/") {
            std::str::from_utf8(&self.bytes).ok()
        } else {
            None
        }
    }
}

mod base64_bytes {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub task: Task,
    pub prompt_text: String,
    pub media: Option<Media>,
    pub history: Vec<HistoryEntry>,
}

impl ModelRequest {
    pub fn new(task: Task, prompt_text: impl Into<String>) -> Self {
        ModelRequest {
            task,
            prompt_text: prompt_text.into(),
            media: None,
            history: Vec::new(),
        }
    }

    pub fn with_media(mut self, media: Option<Media>) -> Self {
        self.media = media;
        self
    }

    pub fn with_history(mut self, history: Vec<HistoryEntry>) -> Self {
        self.history = history;
        self
    }
}

#[derive(Debug, Clone, Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("provider refused the request: {0}")]
    Refused(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("operation not supported by this provider: {0}")]
    Unsupported(&'static str),
}

impl ProviderError {
    /// Errors worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("task {0:?} does not accept media")]
    MediaNotAccepted(Task),
    #[error("generated document still invalid after repair: {}", join_errors(.0))]
    InvalidDocument(Vec<SchemaError>),
    #[error("follow-up line rejected after retry: {0}")]
    MalformedFollowUp(WireError),
    #[error("unparseable receipt output: {0}")]
    MalformedReceipt(String),
    #[error("unparseable classification output: {0}")]
    MalformedClassification(String),
    #[error("category `{0}` is not one of the allowed categories")]
    UnknownCategory(String),
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl GatewayError {
    /// Whether the failure came from the provider transport rather than
    /// from the content it returned.
    pub fn is_provider_failure(&self) -> bool {
        matches!(self, GatewayError::Provider(_))
    }
}

fn join_errors(errors: &[SchemaError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A generative and embedding model backend.
#[async_trait]
pub trait ModelProvider: Send + Sync {
    /// Runs one completion and returns the raw response text.
    async fn complete(&self, request: &ModelRequest) -> Result<String, ProviderError>;

    /// Embeds media (image bytes or text) into the shared vector space.
    async fn embed(&self, media: &Media) -> Result<Vec<f64>, ProviderError>;

    /// Cheap reachability probe.
    async fn health(&self) -> Result<(), ProviderError> {
        Ok(())
    }
}
