//! Shared domain types and the canonical food-log document schema.

mod aggregate;
mod ids;
mod nutrition;
mod records;
mod schema;

pub use aggregate::{nutrition_sum, TimeWindow};
pub use ids::{ConversationId, DraftId, ItemId, LogId, UserId};
pub use nutrition::{Nutrient, NutritionFacts, CONTEXT_LINE_PREFIX, SCALAR_FIELDS};
pub use records::{
    AnswerType, Conversation, FollowUpTurn, FoodEmbedding, FoodLog, MealType, Modality,
    PersonalizedPrompt, ReceiptItem, UserProfile,
};
pub use schema::{
    validate_food_log_json, validate_food_log_value, FoodLogPayload, SchemaError, ValidatedLog,
    OPTIONAL_KEYS, REQUIRED_KEYS,
};

/// The example generated log used in the log-generation prompt.
pub const EXAMPLE_FOOD_LOG_JSON: &str = include_str!("../../prompts/v1/example_food_log.json");
