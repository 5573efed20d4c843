use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{
    Conversation, DraftId, LogId, Modality, ReceiptItem, UserId,
};
use crate::gateway::{format_follow_up_line, HistoryEntry, Media};
use crate::persistence::MediaRef;
use crate::vector_store::RetrievalHit;

/// Reserved answer that skips the open question.
pub const SKIP_TOKEN: &str = "SKIP";

/// What the provider sees in place of a skipped answer.
const SKIPPED_ANSWER_TEXT: &str = "(the user skipped this question)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftState {
    AwaitingQuestion,
    AwaitingAnswer,
    Ready,
    Finalized,
    Abandoned,
}

impl DraftState {
    pub const ALL: [DraftState; 5] = [
        DraftState::AwaitingQuestion,
        DraftState::AwaitingAnswer,
        DraftState::Ready,
        DraftState::Finalized,
        DraftState::Abandoned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DraftState::AwaitingQuestion => "awaiting_question",
            DraftState::AwaitingAnswer => "awaiting_answer",
            DraftState::Ready => "ready",
            DraftState::Finalized => "finalized",
            DraftState::Abandoned => "abandoned",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, DraftState::Finalized | DraftState::Abandoned)
    }

    /// The complete transition relation.
    pub fn can_transition(self, to: DraftState) -> bool {
        use DraftState::*;
        match (self, to) {
            (AwaitingQuestion, AwaitingAnswer) | (AwaitingQuestion, Ready) => true,
            (AwaitingAnswer, AwaitingQuestion) => true,
            (Ready, Finalized) => true,
            (from, Abandoned) => !from.is_terminal(),
            _ => false,
        }
    }
}

impl std::fmt::Display for DraftState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A log in progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDraft {
    pub draft_id: DraftId,
    pub user_id: UserId,
    pub modality: Modality,
    pub media: Media,
    pub media_ref: Option<MediaRef>,
    pub state: DraftState,
    pub conversation: Conversation,
    pub rag_hits: Vec<RetrievalHit>,
    pub receipt_context: Vec<ReceiptItem>,
    pub warnings: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub log_id: Option<LogId>,
}

impl LogDraft {
    /// Moves to `to` if the transition is legal; returns whether it moved.
    pub(crate) fn transition(&mut self, to: DraftState) -> bool {
        if self.state.can_transition(to) {
            self.state = to;
            true
        } else {
            false
        }
    }

    /// Every asked question with its reply, skipped turns included, as the
    /// provider sees it while deciding whether to ask more.
    pub fn dialogue(&self) -> Vec<HistoryEntry> {
        let mut out = Vec::new();
        for turn in &self.conversation.turns {
            if turn.is_open() {
                continue;
            }
            out.push(HistoryEntry::assistant(format_follow_up_line(turn)));
            out.push(HistoryEntry::user(
                turn.answer.as_deref().unwrap_or(SKIPPED_ANSWER_TEXT),
            ));
        }
        out
    }

    /// Answered turns only, in turn order, for the final generation call.
    pub fn transcript(&self) -> Vec<HistoryEntry> {
        let mut out = Vec::new();
        for turn in &self.conversation.turns {
            if let Some(answer) = &turn.answer {
                out.push(HistoryEntry::assistant(turn.question.clone()));
                out.push(HistoryEntry::user(answer.clone()));
            }
        }
        out
    }
}
