//! Response and request bodies that are not plain domain records.

use chrono::{DateTime, Utc};
use nutrilog_core::domain::{
    AnswerType, Conversation, DraftId, FollowUpTurn, FoodLog, LogId, Modality, PersonalizedPrompt, ReceiptItem,
    UserId, UserProfile,
};
use nutrilog_core::pipeline::{DraftState, LogDraft, ReceiptIngest};
use nutrilog_core::vector_store::RetrievalHit;
use serde::{Deserialize, Serialize};

/// Profile fields accepted at registration.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewUser {
    pub age: Option<u32>,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    pub target_calories: Option<f64>,
    pub target_protein: Option<f64>,
    pub target_water_ml: Option<f64>,
    #[serde(default)]
    pub text_goals: String,
    pub tracking_history_months: Option<u32>,
}

impl NewUser {
    pub fn into_profile(self, user_id: UserId) -> UserProfile {
        UserProfile {
            user_id,
            age: self.age,
            height_cm: self.height_cm,
            weight_kg: self.weight_kg,
            target_calories: self.target_calories,
            target_protein: self.target_protein,
            target_water_ml: self.target_water_ml,
            text_goals: self.text_goals,
            tracking_history_months: self.tracking_history_months,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UserView {
    pub user: UserProfile,
    pub personalized_prompt: Option<PersonalizedPrompt>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CreatedUser {
    pub user_id: UserId,
    /// Shown once; only its hash is kept.
    pub token: String,
    pub user: UserProfile,
    pub personalized_prompt: PersonalizedPrompt,
}

#[derive(Debug, Clone, Serialize)]
pub struct PendingQuestion {
    pub turn_index: u32,
    pub question: String,
    pub answer_type: AnswerType,
    pub options: Vec<String>,
}

impl From<&FollowUpTurn> for PendingQuestion {
    fn from(t: &FollowUpTurn) -> Self {
        PendingQuestion {
            turn_index: t.turn_index,
            question: t.question.clone(),
            answer_type: t.answer_type,
            options: t.options.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RagHitView {
    pub food_id: String,
    pub food_label: String,
    pub similarity: f64,
}

impl From<&RetrievalHit> for RagHitView {
    fn from(h: &RetrievalHit) -> Self {
        RagHitView {
            food_id: h.food_id.clone(),
            food_label: h.food_label.clone(),
            similarity: h.similarity,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DraftView {
    pub draft_id: DraftId,
    pub user_id: UserId,
    pub modality: Modality,
    pub state: DraftState,
    pub pending_question: Option<PendingQuestion>,
    pub turns: Vec<FollowUpTurn>,
    pub rag_hits: Vec<RagHitView>,
    pub receipt_items: Vec<String>,
    pub warnings: Vec<String>,
    pub media_ref: Option<String>,
    pub created_at: DateTime<Utc>,
    pub log_id: Option<LogId>,
}

impl From<&LogDraft> for DraftView {
    fn from(d: &LogDraft) -> Self {
        let pending_question = (d.state == DraftState::AwaitingAnswer)
            .then(|| d.conversation.turns.iter().find(|t| t.is_open()))
            .flatten()
            .map(PendingQuestion::from);
        DraftView {
            draft_id: d.draft_id,
            user_id: d.user_id,
            modality: d.modality,
            state: d.state,
            pending_question,
            turns: d.conversation.turns.clone(),
            rag_hits: d.rag_hits.iter().map(RagHitView::from).collect(),
            receipt_items: d.receipt_context.iter().map(|i| i.name.clone()).collect(),
            warnings: d.warnings.clone(),
            media_ref: d.media_ref.as_ref().map(|m| m.key.clone()),
            created_at: d.created_at,
            log_id: d.log_id,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerBody {
    pub answer: String,
}

/// JSON form of a text log.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextLogBody {
    #[serde(default)]
    pub modality: Option<Modality>,
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextReceiptBody {
    pub text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogDetail {
    pub log: FoodLog,
    pub conversation: Option<Conversation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogPageView {
    pub logs: Vec<FoodLog>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReceiptView {
    pub receipt_hash: String,
    pub duplicate: bool,
    pub items: Vec<ReceiptItem>,
    pub warnings: Vec<String>,
}

impl From<ReceiptIngest> for ReceiptView {
    fn from(r: ReceiptIngest) -> Self {
        let warnings = if r.duplicate {
            vec!["this receipt was uploaded before; its items were added again".to_string()]
        } else {
            Vec::new()
        };
        ReceiptView {
            receipt_hash: r.receipt_hash,
            duplicate: r.duplicate,
            items: r.items,
            warnings,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PantryView {
    pub items: Vec<ReceiptItem>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentHealth {
    pub reachable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub store: ComponentHealth,
    pub provider: ComponentHealth,
    pub embedding_rows: usize,
}
