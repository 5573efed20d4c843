//! The logging flow: intake, context assembly, the follow-up loop, final
//! generation and persistence.
//!
//! Drafts live in memory. Each draft sits behind its own async mutex, so
//! operations on one draft run one at a time while different drafts proceed
//! concurrently. A second caller that loses a race observes the state the
//! first one left behind and gets [`PipelineError::WrongState`].

mod draft;

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, FixedOffset, Utc};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Mutex as AsyncMutex;

use crate::domain::{
    validate_food_log_value, Conversation, DraftId, FoodLog, ItemId, LogId, Modality,
    PersonalizedPrompt, ReceiptItem, TimeWindow, UserId, UserProfile,
};
use crate::gateway::{ContextSections, FollowUpReply, Gateway, GatewayError, Media};
use crate::persistence::{MediaError, MediaStore, StorageError, Store};
use crate::vector_store::{format_rag_context, RetrievalHit, VectorStore};

pub use draft::{DraftState, LogDraft, SKIP_TOKEN};

pub const DEFAULT_MAX_TURNS: usize = 3;
pub const DEFAULT_RAG_K: usize = 5;
pub const DEFAULT_RECEIPT_WINDOW_DAYS: i64 = 14;
pub const DEFAULT_IN_FLIGHT_LIMIT: usize = 4;

pub const RECEIPT_CONTEXT_HEADER: &str =
    "The user recently bought these items, which may be part of this meal:";

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub max_turns: usize,
    pub rag_k: usize,
    pub receipt_window_days: i64,
    pub in_flight_limit: usize,
    /// Offset used to infer meal type from the logging hour.
    pub local_offset: FixedOffset,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_turns: DEFAULT_MAX_TURNS,
            rag_k: DEFAULT_RAG_K,
            receipt_window_days: DEFAULT_RECEIPT_WINDOW_DAYS,
            in_flight_limit: DEFAULT_IN_FLIGHT_LIMIT,
            local_offset: FixedOffset::east_opt(0).expect("zero offset"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown draft {0}")]
    UnknownDraft(DraftId),
    #[error("unknown log {0}")]
    UnknownLog(LogId),
    #[error("log {0} is deleted")]
    LogDeleted(LogId),
    #[error("draft is {actual}, operation needs {expected}")]
    WrongState {
        expected: DraftState,
        actual: DraftState,
    },
    #[error("payload is empty")]
    EmptyPayload,
    #[error("answer `{answer}` is not one of {options:?}")]
    AnswerNotInOptions { answer: String, options: Vec<String> },
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("user already has {limit} drafts in flight")]
    TooManyDrafts { limit: usize },
    #[error("invalid profile: {}", .0.join("; "))]
    InvalidProfile(Vec<String>),
    #[error("invalid patch: {}", .0.join("; "))]
    InvalidPatch(Vec<String>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Media(#[from] MediaError),
}

/// Result of a receipt upload.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiptIngest {
    pub items: Vec<ReceiptItem>,
    /// The same bytes were uploaded by this user before.
    pub duplicate: bool,
    pub receipt_hash: String,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

type DraftSlot = Arc<AsyncMutex<LogDraft>>;

pub struct Pipeline {
    store: Arc<Store>,
    media: MediaStore,
    gateway: Gateway,
    vectors: Arc<VectorStore>,
    config: PipelineConfig,
    clock: Clock,
    drafts: parking_lot::Mutex<HashMap<DraftId, (UserId, DraftSlot)>>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .finish()
    }
}

impl Pipeline {
    pub fn new(
        store: Arc<Store>,
        media: MediaStore,
        gateway: Gateway,
        vectors: Arc<VectorStore>,
        config: PipelineConfig,
    ) -> Self {
        Pipeline {
            store,
            media,
            gateway,
            vectors,
            config,
            clock: Arc::new(Utc::now),
            drafts: parking_lot::Mutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn media(&self) -> &MediaStore {
        &self.media
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn vectors(&self) -> &Arc<VectorStore> {
        &self.vectors
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    // ---- users -------------------------------------------------------

    /// Stores a new profile and its personalized prompt.
    pub fn register_user(&self, profile: &UserProfile) -> Result<PersonalizedPrompt, PipelineError> {
        let violations = profile.violations();
        if !violations.is_empty() {
            return Err(PipelineError::InvalidProfile(violations));
        }
        self.store.insert_user(profile)?;
        Ok(self
            .store
            .upsert_personalized_prompt(profile.user_id, &profile.personalized_prompt_text())?)
    }

    /// Replaces a profile. The prompt version advances only if its text changes.
    pub fn update_user(&self, profile: &UserProfile) -> Result<PersonalizedPrompt, PipelineError> {
        let violations = profile.violations();
        if !violations.is_empty() {
            return Err(PipelineError::InvalidProfile(violations));
        }
        self.store.update_user(profile).map_err(|e| match e {
            StorageError::NotFound(_) => PipelineError::UnknownUser(profile.user_id),
            other => other.into(),
        })?;
        Ok(self
            .store
            .upsert_personalized_prompt(profile.user_id, &profile.personalized_prompt_text())?)
    }

    fn require_user(&self, user_id: UserId) -> Result<(), PipelineError> {
        if self.store.user_exists(user_id)? {
            Ok(())
        } else {
            Err(PipelineError::UnknownUser(user_id))
        }
    }

    // ---- drafts ------------------------------------------------------

    fn slot(&self, draft_id: DraftId) -> Result<DraftSlot, PipelineError> {
        self.drafts
            .lock()
            .get(&draft_id)
            .map(|(_, slot)| slot.clone())
            .ok_or(PipelineError::UnknownDraft(draft_id))
    }

    /// Snapshot of a draft.
    pub async fn draft(&self, draft_id: DraftId) -> Result<LogDraft, PipelineError> {
        Ok(self.slot(draft_id)?.lock().await.clone())
    }

    /// Snapshot of a draft owned by `user_id`, hiding other users' drafts.
    pub async fn draft_for(&self, user_id: UserId, draft_id: DraftId) -> Result<LogDraft, PipelineError> {
        let owner = self.drafts.lock().get(&draft_id).map(|(u, _)| *u);
        if owner != Some(user_id) {
            return Err(PipelineError::UnknownDraft(draft_id));
        }
        self.draft(draft_id).await
    }

    /// Whether the draft exists and belongs to `user_id`.
    pub fn owns_draft(&self, user_id: UserId, draft_id: DraftId) -> bool {
        self.drafts.lock().get(&draft_id).map(|(u, _)| *u) == Some(user_id)
    }

    fn in_flight(&self, user_id: UserId) -> usize {
        let slots: Vec<DraftSlot> = self
            .drafts
            .lock()
            .values()
            .filter(|(u, _)| *u == user_id)
            .map(|(_, s)| s.clone())
            .collect();
        slots
            .iter()
            .filter(|s| match s.try_lock() {
                Ok(d) => !d.state.is_terminal(),
                Err(_) => true,
            })
            .count()
    }

    /// Opens a draft, gathers context and asks the first question.
    pub async fn start_log(
        &self,
        user_id: UserId,
        modality: Modality,
        payload: Media,
    ) -> Result<LogDraft, PipelineError> {
        self.require_user(user_id)?;
        if payload.bytes.iter().all(u8::is_ascii_whitespace) {
            return Err(PipelineError::EmptyPayload);
        }
        if self.in_flight(user_id) >= self.config.in_flight_limit {
            return Err(PipelineError::TooManyDrafts {
                limit: self.config.in_flight_limit,
            });
        }
        let draft_id = DraftId::new();
        let now = self.now();
        let media_ref = match modality {
            Modality::Text => None,
            Modality::Image | Modality::Audio => Some(self.media.put_media(
                user_id,
                draft_id,
                &payload.bytes,
                &payload.mime,
            )?),
        };

        let mut warnings = Vec::new();
        let (rag, receipts) = tokio::join!(self.retrieve(modality, &payload), async {
            self.recent_receipts(user_id, now)
        });
        let rag_hits = match rag {
            Ok(hits) => hits,
            Err(w) => {
                tracing::warn!(%draft_id, warning = %w, "continuing without retrieval");
                warnings.push(w);
                Vec::new()
            }
        };
        let receipt_context = receipts?;

        let mut draft = LogDraft {
            draft_id,
            user_id,
            modality,
            media: payload,
            media_ref,
            state: DraftState::AwaitingQuestion,
            conversation: Conversation::new(),
            rag_hits,
            receipt_context,
            warnings,
            created_at: now,
            log_id: None,
        };
        self.ask_next(&mut draft).await?;
        let snapshot = draft.clone();
        self.drafts
            .lock()
            .insert(draft_id, (user_id, Arc::new(AsyncMutex::new(draft))));
        Ok(snapshot)
    }

    async fn retrieve(&self, modality: Modality, payload: &Media) -> Result<Vec<RetrievalHit>, String> {
        if modality == Modality::Audio || self.vectors.is_empty() || self.config.rag_k == 0 {
            return Ok(Vec::new());
        }
        let vector = self
            .gateway
            .embed(payload)
            .await
            .map_err(|e| format!("embedding failed: {e}"))?;
        self.vectors
            .top_k(&vector, self.config.rag_k, None)
            .map_err(|e| format!("retrieval failed: {e}"))
    }

    fn recent_receipts(&self, user_id: UserId, now: DateTime<Utc>) -> Result<Vec<ReceiptItem>, PipelineError> {
        let window = TimeWindow::new(
            now - Duration::days(self.config.receipt_window_days),
            now + Duration::seconds(1),
        );
        Ok(self.store.list_receipt_items(user_id, window)?)
    }

    fn personalized_prompt(&self, user_id: UserId) -> Result<Option<String>, PipelineError> {
        Ok(self
            .store
            .get_personalized_prompt(user_id)?
            .map(|p| p.prompt_text))
    }

    /// From awaiting_question: asks for the next turn or moves to ready.
    async fn ask_next(&self, draft: &mut LogDraft) -> Result<(), PipelineError> {
        debug_assert_eq!(draft.state, DraftState::AwaitingQuestion);
        if draft.conversation.turns.len() >= self.config.max_turns {
            draft.transition(DraftState::Ready);
            return Ok(());
        }
        let personalized = self.personalized_prompt(draft.user_id)?;
        let receipts = format_receipt_context(&draft.receipt_context);
        let reply = self
            .gateway
            .generate_follow_up(
                personalized.as_deref(),
                receipts.as_deref(),
                Some(&draft.media),
                &draft.dialogue(),
            )
            .await;
        match reply {
            Ok(FollowUpReply::Question { turn, .. }) => {
                draft.conversation.push_question(turn);
                draft.transition(DraftState::AwaitingAnswer);
            }
            Ok(FollowUpReply::NoQuestion) => {
                draft.transition(DraftState::Ready);
            }
            Err(e) if !e.is_provider_failure() => {
                let w = format!("follow-up unavailable: {e}");
                tracing::warn!(draft_id = %draft.draft_id, warning = %w);
                draft.warnings.push(w);
                draft.transition(DraftState::Ready);
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    /// Records an answer (or [`SKIP_TOKEN`]) and asks for the next turn.
    pub async fn answer_follow_up(&self, draft_id: DraftId, answer: &str) -> Result<LogDraft, PipelineError> {
        let slot = self.slot(draft_id)?;
        let mut draft = slot.lock().await;
        if draft.state != DraftState::AwaitingAnswer {
            return Err(PipelineError::WrongState {
                expected: DraftState::AwaitingAnswer,
                actual: draft.state,
            });
        }
        let answer = answer.trim();
        let mut working = draft.clone();
        {
            let turn = working
                .conversation
                .open_turn_mut()
                .expect("awaiting_answer has an open turn");
            if answer == SKIP_TOKEN {
                turn.skipped = true;
            } else if answer.is_empty() {
                return Err(PipelineError::EmptyAnswer);
            } else if !turn.accepts(answer) {
                return Err(PipelineError::AnswerNotInOptions {
                    answer: answer.to_string(),
                    options: turn.options.clone(),
                });
            } else {
                turn.answer = Some(answer.to_string());
            }
        }
        working.transition(DraftState::AwaitingQuestion);
        self.ask_next(&mut working).await?;
        *draft = working;
        Ok(draft.clone())
    }

    /// Generates, validates and stores the final log.
    pub async fn finalize_log(&self, draft_id: DraftId) -> Result<FoodLog, PipelineError> {
        let slot = self.slot(draft_id)?;
        let mut draft = slot.lock().await;
        if draft.state != DraftState::Ready {
            return Err(PipelineError::WrongState {
                expected: DraftState::Ready,
                actual: draft.state,
            });
        }
        let sections = ContextSections {
            personalized_prompt: self.personalized_prompt(draft.user_id)?,
            rag_context: (!draft.rag_hits.is_empty()).then(|| format_rag_context(&draft.rag_hits)),
            receipt_context: format_receipt_context(&draft.receipt_context),
            chat_history: None,
        };
        let transcript = draft.transcript();
        let validated = self
            .gateway
            .generate_food_log(&sections, Some(&draft.media), &transcript)
            .await?;
        for w in &validated.warnings {
            tracing::debug!(%draft_id, warning = %w, "normalized generated log");
        }
        let has_turns = !draft.conversation.turns.is_empty();
        let log = FoodLog::from_payload(
            draft.user_id,
            validated.payload,
            self.now(),
            self.config.local_offset,
            draft.modality,
            draft.media_ref.as_ref().map(|m| m.key.clone()),
            has_turns.then_some(draft.conversation.conversation_id),
        );
        self.store
            .insert_log_with_conversation(&log, &draft.conversation)?;
        draft.conversation.log_id = Some(log.log_id);
        draft.conversation.closed = true;
        draft.log_id = Some(log.log_id);
        draft.transition(DraftState::Finalized);
        Ok(log)
    }

    pub async fn abandon(&self, draft_id: DraftId) -> Result<LogDraft, PipelineError> {
        let slot = self.slot(draft_id)?;
        let mut draft = slot.lock().await;
        if !draft.transition(DraftState::Abandoned) {
            return Err(PipelineError::WrongState {
                expected: DraftState::Ready,
                actual: draft.state,
            });
        }
        Ok(draft.clone())
    }

    /// Drops terminal drafts older than `max_age`.
    pub fn prune(&self, max_age: Duration) {
        let cutoff = self.now() - max_age;
        self.drafts.lock().retain(|_, (_, slot)| match slot.try_lock() {
            Ok(d) => !(d.state.is_terminal() && d.created_at < cutoff),
            Err(_) => true,
        });
    }

    // ---- receipts ----------------------------------------------------

    pub async fn ingest_receipt(&self, user_id: UserId, media: &Media) -> Result<ReceiptIngest, PipelineError> {
        self.require_user(user_id)?;
        let receipt_hash = hex::encode(Sha256::digest(&media.bytes));
        let duplicate = self.store.receipt_seen(user_id, &receipt_hash)?;
        let drafts = self.gateway.parse_receipt(media).await?;
        let now = self.now();
        let items: Vec<ReceiptItem> = drafts
            .into_iter()
            .map(|d| ReceiptItem {
                item_id: ItemId::new(),
                user_id,
                name: d.name,
                quantity: d.quantity,
                source: d.source,
                nutrition_summary: d.nutrition_summary,
                purchased_at: now,
            })
            .collect();
        self.store.insert_receipt_items(&items, &receipt_hash)?;
        Ok(ReceiptIngest {
            items,
            duplicate: duplicate && !receipt_is_empty(media),
            receipt_hash,
        })
    }

    // ---- stored logs -------------------------------------------------

    fn owned_log(&self, user_id: UserId, log_id: LogId) -> Result<FoodLog, PipelineError> {
        let log = self.store.get_log(log_id).map_err(|e| match e {
            StorageError::NotFound(_) => PipelineError::UnknownLog(log_id),
            other => other.into(),
        })?;
        if log.user_id != user_id {
            return Err(PipelineError::UnknownLog(log_id));
        }
        if log.deleted {
            return Err(PipelineError::LogDeleted(log_id));
        }
        Ok(log)
    }

    /// Applies a partial food-log document. The merged document must pass
    /// the same validation as generated logs; on failure nothing changes.
    pub fn edit_log(
        &self,
        user_id: UserId,
        log_id: LogId,
        patch: &Map<String, Value>,
    ) -> Result<FoodLog, PipelineError> {
        let mut log = self.owned_log(user_id, log_id)?;
        let mut doc = match serde_json::to_value(log.to_payload()) {
            Ok(Value::Object(o)) => o,
            _ => unreachable!("payload serializes to an object"),
        };
        for (k, v) in patch {
            if let (Value::Object(m), Some(Value::Object(existing))) =
                (v, doc.get_mut("micronutrients").filter(|_| k == "micronutrients"))
            {
                for (mk, mv) in m {
                    existing.insert(mk.clone(), mv.clone());
                }
                continue;
            }
            doc.insert(k.clone(), v.clone());
        }
        let validated = validate_food_log_value(&Value::Object(doc)).map_err(|errors| {
            PipelineError::InvalidPatch(errors.iter().map(ToString::to_string).collect())
        })?;
        let p = validated.payload;
        log.meal_name = p.meal_name;
        log.ingredients = p.ingredients;
        log.serving_size = p.serving_size;
        if let Some(mt) = p.meal_type {
            log.meal_type = mt;
        }
        log.nutrition = p.nutrition;
        log.edited = true;
        self.store.update_log(&log)?;
        Ok(log)
    }

    /// Soft delete.
    pub fn delete_log(&self, user_id: UserId, log_id: LogId) -> Result<FoodLog, PipelineError> {
        let mut log = self.owned_log(user_id, log_id)?;
        log.deleted = true;
        self.store.update_log(&log)?;
        Ok(log)
    }
}

fn receipt_is_empty(media: &Media) -> bool {
    media.bytes.iter().all(u8::is_ascii_whitespace)
}

/// Renders pantry items as a prompt block; `None` when there are none.
pub fn format_receipt_context(items: &[ReceiptItem]) -> Option<String> {
    if items.is_empty() {
        return None;
    }
    let mut out = String::from(RECEIPT_CONTEXT_HEADER);
    for item in items {
        out.push_str("\n- ");
        out.push_str(&item.name);
        if !item.quantity.is_empty() {
            out.push_str(&format!(" ({})", item.quantity));
        }
        if !item.source.is_empty() {
            out.push_str(&format!(", from {}", item.source));
        }
    }
    Some(out)
}
