use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Follow-up question categories used for engagement analytics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    PreparationSource,
    FoodTypeDetail,
    QuantityPortion,
    ConsumptionRatio,
    None,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 5] = [
        QuestionCategory::PreparationSource,
        QuestionCategory::FoodTypeDetail,
        QuestionCategory::QuantityPortion,
        QuestionCategory::ConsumptionRatio,
        QuestionCategory::None,
    ];

    /// The category name as the classifier is asked to emit it.
    pub fn label(self) -> &'static str {
        match self {
            QuestionCategory::PreparationSource => "Preparation & Source",
            QuestionCategory::FoodTypeDetail => "Food Type & Detail",
            QuestionCategory::QuantityPortion => "Quantity & Portion Size",
            QuestionCategory::ConsumptionRatio => "Consumption Ratio",
            QuestionCategory::None => "None",
        }
    }
}

impl fmt::Display for QuestionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for QuestionCategory {
    type Err = String;

    /// Accepts labels (`Quantity & Portion Size`), identifiers
    /// (`QuantityPortion`, `quantity_portion`), and numbered forms
    /// (`3. Quantity & Portion Size`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ' ')
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "preparationsource" | "preparationandsource" => Ok(QuestionCategory::PreparationSource),
            "foodtypedetail" | "foodtypeanddetail" => Ok(QuestionCategory::FoodTypeDetail),
            "quantityportionsize" | "quantityportion" | "quantityandportionsize" => {
                Ok(QuestionCategory::QuantityPortion)
            }
            "consumptionratio" => Ok(QuestionCategory::ConsumptionRatio),
            "none" | "other" => Ok(QuestionCategory::None),
            _ => Err(s.to_string()),
        }
    }
}
