use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    parse_follow_up_line, prompts::format_chat_history, ContextSections, GatewayError,
    HistoryEntry, Media, ModelProvider, ModelRequest, PromptCatalog,
    QuestionCategory, Task, NO_QUESTION,
};
use crate::domain::{validate_food_log_json, FollowUpTurn, NutritionFacts, ValidatedLog};

/// Exponential backoff for transient provider failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FollowUpReply {
    Question { line: String, turn: FollowUpTurn },
    NoQuestion,
}

/// A receipt line with its estimated nutrition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiptDraft {
    pub name: String,
    pub quantity: String,
    pub source: String,
    pub nutrition_summary: NutritionFacts,
}

#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn ModelProvider>,
    catalog: Arc<PromptCatalog>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("retry", &self.retry).finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn ModelProvider>) -> Self {
        Gateway {
            provider,
            catalog: Arc::new(PromptCatalog::builtin()),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_catalog(mut self, catalog: PromptCatalog) -> Self {
        self.catalog = Arc::new(catalog);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn catalog(&self) -> &PromptCatalog {
        &self.catalog
    }

    pub fn provider(&self) -> &Arc<dyn ModelProvider> {
        &self.provider
    }

    async fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        if request.media.is_some() && !request.task.accepts_media() {
            return Err(GatewayError::MediaNotAccepted(request.task));
        }
        let mut attempt = 0;
        loop {
            match self.provider.complete(request).await {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    tracing::warn!(task = request.task.as_str(), attempt, error = %e, "retrying provider call");
                    tokio::time::sleep(self.retry.backoff(attempt)).await;
                    attempt += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub async fn embed(&self, media: &Media) -> Result<Vec<f64>, GatewayError> {
        let mut attempt = 0;
        loop {
            match self.provider.embed(media).await {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    tokio::time::sleep(self.retry.backoff(attempt)).await;
                    attempt += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Sends a request expected to produce a food log document, with one
    /// repair round-trip if the first answer fails validation.
    async fn complete_food_log(&self, request: ModelRequest) -> Result<ValidatedLog, GatewayError> {
        let first = self.complete(&request).await?;
        let errors = match validate_food_log_json(&first) {
            Ok(v) => return Ok(v),
            Err(errors) => errors,
        };
        tracing::warn!(errors = errors.len(), "food log failed validation, requesting repair");
        let messages: Vec<String> = errors.iter().map(ToString::to_string).collect();
        let repair = self.catalog.repair_prompt(&messages)?;
        let mut history = request.history.clone();
        history.push(HistoryEntry::assistant(first));
        history.push(HistoryEntry::user(repair));
        let retry = request.with_history(history);
        let second = self.complete(&retry).await?;
        validate_food_log_json(&second).map_err(GatewayError::InvalidDocument)
    }

    /// Generates a validated food log. When `sections.chat_history` is unset
    /// and `history` is non-empty, the transcript is rendered into the prompt
    /// as well as sent as structured history.
    pub async fn generate_food_log(
        &self,
        sections: &ContextSections,
        media: Option<&Media>,
        history: &[HistoryEntry],
    ) -> Result<ValidatedLog, GatewayError> {
        let mut sections = sections.clone();
        if sections.chat_history.is_none() && !history.is_empty() {
            sections.chat_history = Some(format_chat_history(history));
        }
        let prompt = self.catalog.food_log_prompt(&sections)?;
        let request = ModelRequest::new(Task::GenerateLog, prompt)
            .with_media(media.cloned())
            .with_history(history.to_vec());
        self.complete_food_log(request).await
    }

    /// Asks for the next clarifying question. A malformed line is retried once.
    pub async fn generate_follow_up(
        &self,
        personalized_prompt: Option<&str>,
        receipt_context: Option<&str>,
        media: Option<&Media>,
        history: &[HistoryEntry],
    ) -> Result<FollowUpReply, GatewayError> {
        let prompt = self
            .catalog
            .follow_up_prompt(personalized_prompt, receipt_context)?;
        let request = ModelRequest::new(Task::FollowUp, prompt)
            .with_media(media.cloned())
            .with_history(history.to_vec());
        let mut last_error = None;
        for _ in 0..2 {
            let raw = self.complete(&request).await?;
            match interpret_follow_up(&raw) {
                Ok(reply) => {
                    if let FollowUpReply::Question { turn, .. } = &reply {
                        if turn.options.len() > 3 {
                            tracing::warn!(
                                options = turn.options.len(),
                                "follow-up offers more than 3 options"
                            );
                        }
                    }
                    return Ok(reply);
                }
                Err(e) => {
                    tracing::warn!(error = %e, "malformed follow-up line");
                    last_error = Some(e);
                }
            }
        }
        Err(GatewayError::MalformedFollowUp(
            last_error.expect("loop ran at least once"),
        ))
    }

    /// Extracts receipt items and estimates nutrition for each one.
    pub async fn parse_receipt(&self, media: &Media) -> Result<Vec<ReceiptDraft>, GatewayError> {
        if media.bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(Vec::new());
        }
        let prompt = self.catalog.receipt_prompt()?;
        let request = ModelRequest::new(Task::ParseReceipt, prompt).with_media(Some(media.clone()));
        let raw = self.complete(&request).await?;
        let lines = parse_receipt_lines(&raw)?;
        let mut drafts = Vec::with_capacity(lines.len());
        for line in lines {
            let prompt = self
                .catalog
                .item_nutrition_prompt(&line.name, &line.quantity, &line.source)?;
            let log = self
                .complete_food_log(ModelRequest::new(Task::GenerateLog, prompt))
                .await?;
            drafts.push(ReceiptDraft {
                name: line.name,
                quantity: line.quantity,
                source: line.source,
                nutrition_summary: log.payload.nutrition,
            });
        }
        Ok(drafts)
    }

    pub async fn classify_question(&self, question: &str) -> Result<QuestionCategory, GatewayError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(GatewayError::EmptyQuestion);
        }
        let prompt = self.catalog.classify_prompt(question)?;
        let raw = self
            .complete(&ModelRequest::new(Task::ClassifyQuestion, prompt))
            .await?;
        parse_classification(&raw)
    }
}

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
            rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
        }
        None => t,
    }
}

fn interpret_follow_up(raw: &str) -> Result<FollowUpReply, super::WireError> {
    let line = raw
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    if line.trim_matches('`') == NO_QUESTION {
        return Ok(FollowUpReply::NoQuestion);
    }
    let turn = parse_follow_up_line(line)?;
    Ok(FollowUpReply::Question {
        line: line.trim_matches('`').trim().to_string(),
        turn,
    })
}

struct ReceiptLine {
    name: String,
    quantity: String,
    source: String,
}

fn parse_receipt_lines(raw: &str) -> Result<Vec<ReceiptLine>, GatewayError> {
    let bad = |m: &str| GatewayError::MalformedReceipt(m.to_string());
    let value: Value = serde_json::from_str(strip_fence(raw)).map_err(|e| bad(&e.to_string()))?;
    let items = match &value {
        Value::Array(items) => items,
        Value::Object(o) => o
            .get("items")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("expected an array of items"))?,
        _ => return Err(bad("expected an array of items")),
    };
    let text = |v: Option<&Value>| match v {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    };
    items
        .iter()
        .map(|item| {
            let obj = item.as_object().ok_or_else(|| bad("item is not an object"))?;
            let name = text(obj.get("name"));
            if name.is_empty() {
                return Err(bad("item without a name"));
            }
            let quantity = match text(obj.get("quantity")) {
                q if q.is_empty() => "1".to_string(),
                q => q,
            };
            Ok(ReceiptLine {
                name,
                quantity,
                source: text(obj.get("source")),
            })
        })
        .collect()
}

fn parse_classification(raw: &str) -> Result<QuestionCategory, GatewayError> {
    let body = strip_fence(raw);
    let label = match serde_json::from_str::<Value>(body) {
        Ok(Value::Object(o)) => match o.get("category") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(GatewayError::MalformedClassification(body.to_string())),
        },
        Ok(Value::String(s)) => s,
        _ => body.to_string(),
    };
    label
        .parse::<QuestionCategory>()
        .map_err(|_| GatewayError::UnknownCategory(label))
}
