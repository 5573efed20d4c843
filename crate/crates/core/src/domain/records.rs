use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::ids::{ConversationId, ItemId, LogId, UserId};
use super::nutrition::NutritionFacts;
use super::schema::FoodLogPayload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MealType {
    Breakfast,
    Lunch,
    Dinner,
    Snack,
    Other,
}

impl MealType {
    pub fn as_str(self) -> &'static str {
        match self {
            MealType::Breakfast => "breakfast",
            MealType::Lunch => "lunch",
            MealType::Dinner => "dinner",
            MealType::Snack => "snack",
            MealType::Other => "other",
        }
    }

    /// Default meal type for a local hour of day when the generated document
    /// does not carry one.
    pub fn infer_from_hour(hour: u32) -> MealType {
        match hour {
            5..=10 => MealType::Breakfast,
            11..=15 => MealType::Lunch,
            17..=22 => MealType::Dinner,
            _ => MealType::Snack,
        }
    }
}

impl FromStr for MealType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "breakfast" => Ok(MealType::Breakfast),
            "lunch" => Ok(MealType::Lunch),
            "dinner" => Ok(MealType::Dinner),
            "snack" => Ok(MealType::Snack),
            "other" => Ok(MealType::Other),
            other => Err(format!("unknown meal type `{other}`")),
        }
    }
}

impl fmt::Display for MealType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
    Audio,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Image, Modality::Text, Modality::Audio];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Text => "text",
            Modality::Audio => "audio",
        }
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            "audio" => Ok(Modality::Audio),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One logged meal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodLog {
    pub log_id: LogId,
    pub user_id: UserId,
    pub meal_name: String,
    pub ingredients: Vec<String>,
    pub serving_size: String,
    pub meal_type: MealType,
    pub logged_at: DateTime<Utc>,
    pub modality: Modality,
    pub media_ref: Option<String>,
    pub nutrition: NutritionFacts,
    pub conversation_id: Option<ConversationId>,
    pub edited: bool,
    pub deleted: bool,
}

impl FoodLog {
    /// Builds a log from a validated payload. A missing meal type is
    /// inferred from the hour of `logged_at` in `local_offset`.
    pub fn from_payload(
        user_id: UserId,
        payload: FoodLogPayload,
        logged_at: DateTime<Utc>,
        local_offset: FixedOffset,
        modality: Modality,
        media_ref: Option<String>,
        conversation_id: Option<ConversationId>,
    ) -> FoodLog {
        let meal_type = payload.meal_type.unwrap_or_else(|| {
            MealType::infer_from_hour(logged_at.with_timezone(&local_offset).hour())
        });
        FoodLog {
            log_id: LogId::new(),
            user_id,
            meal_name: payload.meal_name,
            ingredients: payload.ingredients,
            serving_size: payload.serving_size,
            meal_type,
            logged_at,
            modality,
            media_ref,
            nutrition: payload.nutrition,
            conversation_id,
            edited: false,
            deleted: false,
        }
    }

    /// Media invariant: image and audio logs must reference stored media.
    pub fn media_consistent(&self) -> bool {
        match self.modality {
            Modality::Text => true,
            Modality::Image | Modality::Audio => self.media_ref.is_some(),
        }
    }

    pub fn to_payload(&self) -> FoodLogPayload {
        FoodLogPayload {
            meal_name: self.meal_name.clone(),
            ingredients: self.ingredients.clone(),
            serving_size: self.serving_size.clone(),
            meal_type: Some(self.meal_type),
            date: None,
            nutrition: self.nutrition.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub age: Option<u32>,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    pub target_calories: Option<f64>,
    pub target_protein: Option<f64>,
    pub target_water_ml: Option<f64>,
    #[serde(default)]
    pub text_goals: String,
    /// Months of food-tracking experience before joining, when known.
    #[serde(default)]
    pub tracking_history_months: Option<u32>,
}

impl UserProfile {
    pub fn new(user_id: UserId) -> Self {
        UserProfile {
            user_id,
            age: None,
            height_cm: None,
            weight_kg: None,
            target_calories: None,
            target_protein: None,
            target_water_ml: None,
            text_goals: String::new(),
            tracking_history_months: None,
        }
    }

    /// Every set numeric field must be positive and finite.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.age == Some(0) {
            out.push("age must be positive".to_string());
        }
        let fields = [
            ("height_cm", self.height_cm),
            ("weight_kg", self.weight_kg),
            ("target_calories", self.target_calories),
            ("target_protein", self.target_protein),
            ("target_water_ml", self.target_water_ml),
        ];
        for (name, value) in fields {
            if let Some(v) = value {
                if !v.is_finite() || v <= 0.0 {
                    out.push(format!("{name} must be positive (got {v})"));
                }
            }
        }
        out
    }

    /// Renders the personalized prompt block for this profile.
    pub fn personalized_prompt_text(&self) -> String {
        let mut lines = vec!["User context:".to_string()];
        let mut about = Vec::new();
        if let Some(age) = self.age {
            about.push(format!("{age} years old"));
        }
        if let Some(h) = self.height_cm {
            about.push(format!("{h} cm tall"));
        }
        if let Some(w) = self.weight_kg {
            about.push(format!("weighs {w} kg"));
        }
        if !about.is_empty() {
            lines.push(format!("The user is {}.", about.join(", ")));
        }
        let mut targets = Vec::new();
        if let Some(c) = self.target_calories {
            targets.push(format!("{c} kcal"));
        }
        if let Some(p) = self.target_protein {
            targets.push(format!("{p} g protein"));
        }
        if let Some(w) = self.target_water_ml {
            targets.push(format!("{w} mL water"));
        }
        if !targets.is_empty() {
            lines.push(format!("Daily targets: {}.", targets.join(", ")));
        }
        let goals = self.text_goals.trim();
        if !goals.is_empty() {
            lines.push(format!("Goals in the user's words: {goals}"));
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalizedPrompt {
    pub user_id: UserId,
    pub prompt_text: String,
    pub goals_version: u32,
}

/// One pantry row derived from a receipt line item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiptItem {
    pub item_id: ItemId,
    pub user_id: UserId,
    pub name: String,
    pub quantity: String,
    pub source: String,
    pub nutrition_summary: NutritionFacts,
    pub purchased_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Text,
    Select,
}

impl AnswerType {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerType::Text => "text",
            AnswerType::Select => "select",
        }
    }
}

/// One clarifying question and, once given, its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUpTurn {
    pub turn_index: u32,
    pub question: String,
    pub answer_type: AnswerType,
    pub options: Vec<String>,
    pub answer: Option<String>,
    #[serde(default)]
    pub skipped: bool,
}

impl FollowUpTurn {
    pub fn is_open(&self) -> bool {
        self.answer.is_none() && !self.skipped
    }

    pub fn is_answered(&self) -> bool {
        self.answer.is_some()
    }

    pub fn accepts(&self, answer: &str) -> bool {
        match self.answer_type {
            AnswerType::Text => true,
            AnswerType::Select => self.options.iter().any(|o| o == answer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: ConversationId,
    pub log_id: Option<LogId>,
    pub turns: Vec<FollowUpTurn>,
    pub closed: bool,
}

impl Conversation {
    pub fn new() -> Self {
        Conversation {
            conversation_id: ConversationId::new(),
            log_id: None,
            turns: Vec::new(),
            closed: false,
        }
    }

    pub fn open_turn(&self) -> Option<&FollowUpTurn> {
        self.turns.iter().find(|t| t.is_open())
    }

    pub fn open_turn_mut(&mut self) -> Option<&mut FollowUpTurn> {
        self.turns.iter_mut().find(|t| t.is_open())
    }

    pub fn open_turn_count(&self) -> usize {
        self.turns.iter().filter(|t| t.is_open()).count()
    }

    pub fn answered_count(&self) -> usize {
        self.turns.iter().filter(|t| t.is_answered()).count()
    }

    /// Whether turn indices run 0, 1, 2, ... in order.
    pub fn indices_contiguous(&self) -> bool {
        self.turns
            .iter()
            .enumerate()
            .all(|(i, t)| t.turn_index as usize == i)
    }

    /// Appends an unanswered turn with the next index.
    pub fn push_question(&mut self, mut turn: FollowUpTurn) -> &FollowUpTurn {
        turn.turn_index = self.turns.len() as u32;
        turn.answer = None;
        turn.skipped = false;
        self.turns.push(turn);
        self.turns.last().expect("just pushed")
    }
}

impl Default for Conversation {
    fn default() -> Self {
        Self::new()
    }
}

/// A knowledge-base row: a unit vector with its label and verified nutrition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodEmbedding {
    pub food_id: String,
    pub vector: Vec<f64>,
    pub food_label: String,
    pub nutrition: NutritionFacts,
}
