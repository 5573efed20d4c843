//! HTTP provider.
//!
//! Wire protocol:
//!
//! * `POST {endpoint}/v1/complete` with
//!   `{"task", "prompt", "media": {"mime", "data_base64"} | null, "history": [{"role", "text"}]}`,
//!   answered by `{"text": "..."}` or `{"refusal": "..."}`.
//! * `POST {endpoint}/v1/embed` with `{"media": {...}}`, answered by
//!   `{"embedding": [...]}`.
//! * `GET {endpoint}/v1/health`, any 2xx meaning reachable.
//!
//! All three carry `Authorization: Bearer <credential>`.

use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{HistoryEntry, Media, ModelProvider, ModelRequest, ProviderError};

pub struct HttpProvider {
    client: reqwest::Client,
    endpoint: String,
    credential: String,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.endpoint)
            .field("credential", &"<redacted>")
            .finish()
    }
}

#[derive(Serialize)]
struct WireMedia<'a> {
    mime: &'a str,
    data_base64: String,
}

impl<'a> From<&'a Media> for WireMedia<'a> {
    fn from(m: &'a Media) -> Self {
        WireMedia {
            mime: &m.mime,
            data_base64: base64::engine::general_purpose::STANDARD.encode(&m.bytes),
        }
    }
}

#[derive(Serialize)]
struct CompleteBody<'a> {
    task: &'static str,
    prompt: &'a str,
    media: Option<WireMedia<'a>>,
    history: &'a [HistoryEntry],
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    media: WireMedia<'a>,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: Option<String>,
    refusal: Option<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl HttpProvider {
    pub fn new(endpoint: &str, credential: &str, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpProvider {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            credential: credential.to_string(),
        })
    }

    async fn post<B: Serialize + ?Sized>(&self, path: &str, body: &B) -> Result<String, ProviderError> {
        let response = self
            .client
            .post(format!("{}{path}", self.endpoint))
            .bearer_auth(&self.credential)
            .json(body)
            .send()
            .await
            .map_err(map_reqwest)?;
        let status = response.status();
        let text = response.text().await.map_err(map_reqwest)?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        Ok(text)
    }
}

fn map_reqwest(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout
    } else {
        ProviderError::Transport(e.to_string())
    }
}

#[async_trait]
impl ModelProvider for HttpProvider {
    async fn complete(&self, request: &ModelRequest) -> Result<String, ProviderError> {
        let body = CompleteBody {
            task: request.task.as_str(),
            prompt: &request.prompt_text,
            media: request.media.as_ref().map(WireMedia::from),
            history: &request.history,
        };
        let raw = self.post("/v1/complete", &body).await?;
        let parsed: CompleteResponse =
            serde_json::from_str(&raw).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        match (parsed.text, parsed.refusal) {
            (_, Some(reason)) => Err(ProviderError::Refused(reason)),
            (Some(text), None) => Ok(text),
            (None, None) => Err(ProviderError::Malformed("response has no `text`".into())),
        }
    }

    async fn embed(&self, media: &Media) -> Result<Vec<f64>, ProviderError> {
        let raw = self
            .post("/v1/embed", &EmbedBody { media: media.into() })
            .await?;
        let parsed: EmbedResponse =
            serde_json::from_str(&raw).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        Ok(parsed.embedding)
    }

    async fn health(&self) -> Result<(), ProviderError> {
        let response = self
            .client
            .get(format!("{}/v1/health", self.endpoint))
            .bearer_auth(&self.credential)
            .send()
            .await
            .map_err(map_reqwest)?;
        if response.status().is_success() {
            Ok(())
        } else {
            Err(ProviderError::Status {
                status: response.status().as_u16(),
                body: response.text().await.unwrap_or_default(),
            })
        }
    }
}
