//! The nutrient vector shared by estimates, ground truth, pantry items and
//! retrieval rows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Macro and micronutrient amounts for one food item or meal.
///
/// Calories are kcal, cholesterol is mg, everything else is grams.
/// Micronutrient keys carry their unit as a suffix, e.g. `potassium_mg`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NutritionFacts {
    pub calories: f64,
    pub protein: f64,
    pub carbohydrates: f64,
    pub fat: f64,
    pub fiber: f64,
    pub sugar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturated_fat: Option<f64>,
    pub cholesterol: f64,
    pub micronutrients: BTreeMap<String, f64>,
}

/// The four nutrients scored by the evaluation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nutrient {
    Calories,
    Protein,
    Carbohydrates,
    Fat,
}

impl Nutrient {
    pub const ALL: [Nutrient; 4] = [
        Nutrient::Calories,
        Nutrient::Protein,
        Nutrient::Carbohydrates,
        Nutrient::Fat,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Nutrient::Calories => "calories",
            Nutrient::Protein => "protein",
            Nutrient::Carbohydrates => "carbohydrates",
            Nutrient::Fat => "fat",
        }
    }

    /// Row label used in evaluation tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Nutrient::Calories => "Calories (kcal)",
            Nutrient::Protein => "Protein (g)",
            Nutrient::Carbohydrates => "Carbohydrates (g)",
            Nutrient::Fat => "Fat (g)",
        }
    }
}

impl fmt::Display for Nutrient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Scalar fields in their fixed presentation order.
pub const SCALAR_FIELDS: [&str; 8] = [
    "calories",
    "protein",
    "carbohydrates",
    "fat",
    "fiber",
    "sugar",
    "saturated_fat",
    "cholesterol",
];

/// Prefix of the single-line nutrition rendering used inside prompt context
/// blocks.
pub const CONTEXT_LINE_PREFIX: &str = "nutrition:";

impl NutritionFacts {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn get(&self, nutrient: Nutrient) -> f64 {
        match nutrient {
            Nutrient::Calories => self.calories,
            Nutrient::Protein => self.protein,
            Nutrient::Carbohydrates => self.carbohydrates,
            Nutrient::Fat => self.fat,
        }
    }

    fn scalar(&self, key: &str) -> Option<f64> {
        match key {
            "calories" => Some(self.calories),
            "protein" => Some(self.protein),
            "carbohydrates" => Some(self.carbohydrates),
            "fat" => Some(self.fat),
            "fiber" => Some(self.fiber),
            "sugar" => Some(self.sugar),
            "saturated_fat" => self.saturated_fat,
            "cholesterol" => Some(self.cholesterol),
            _ => None,
        }
    }

    /// Sets a scalar field by key. Returns false for unknown keys.
    pub fn set_scalar(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "calories" => &mut self.calories,
            "protein" => &mut self.protein,
            "carbohydrates" => &mut self.carbohydrates,
            "fat" => &mut self.fat,
            "fiber" => &mut self.fiber,
            "sugar" => &mut self.sugar,
            "saturated_fat" => {
                self.saturated_fat = Some(value);
                return true;
            }
            "cholesterol" => &mut self.cholesterol,
            _ => return false,
        };
        *slot = value;
        true
    }

    /// Field-wise addition; micronutrient maps merge by key.
    pub fn accumulate(&mut self, other: &NutritionFacts) {
        self.calories += other.calories;
        self.protein += other.protein;
        self.carbohydrates += other.carbohydrates;
        self.fat += other.fat;
        self.fiber += other.fiber;
        self.sugar += other.sugar;
        self.cholesterol += other.cholesterol;
        if let Some(sat) = other.saturated_fat {
            *self.saturated_fat.get_or_insert(0.0) += sat;
        }
        for (key, value) in &other.micronutrients {
            *self.micronutrients.entry(key.clone()).or_insert(0.0) += value;
        }
    }

    /// Field-wise arithmetic mean. Saturated fat and micronutrients absent
    /// from a row count as zero for that row. `None` for an empty slice.
    pub fn mean(rows: &[NutritionFacts]) -> Option<NutritionFacts> {
        if rows.is_empty() {
            return None;
        }
        let mut total = NutritionFacts::zero();
        for row in rows {
            total.accumulate(row);
        }
        let n = rows.len() as f64;
        Some(NutritionFacts {
            calories: total.calories / n,
            protein: total.protein / n,
            carbohydrates: total.carbohydrates / n,
            fat: total.fat / n,
            fiber: total.fiber / n,
            sugar: total.sugar / n,
            saturated_fat: total.saturated_fat.map(|v| v / n),
            cholesterol: total.cholesterol / n,
            micronutrients: total
                .micronutrients
                .into_iter()
                .map(|(k, v)| (k, v / n))
                .collect(),
        })
    }

    /// Checks the value invariants, returning one message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for key in SCALAR_FIELDS {
            if let Some(v) = self.scalar(key) {
                if !v.is_finite() {
                    out.push(format!("{key} is not finite"));
                } else if v < 0.0 {
                    out.push(format!("{key} is negative ({v})"));
                }
            }
        }
        for (key, v) in &self.micronutrients {
            if !v.is_finite() {
                out.push(format!("micronutrient {key} is not finite"));
            } else if *v < 0.0 {
                out.push(format!("micronutrient {key} is negative ({v})"));
            }
        }
        if let Some(sat) = self.saturated_fat {
            if sat > self.fat {
                out.push(format!("saturated_fat ({sat}) exceeds fat ({})", self.fat));
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }

    /// Renders the facts as one `nutrition: key=value; ...` line.
    ///
    /// Values use the shortest round-trip decimal form, so
    /// [`NutritionFacts::parse_context_line`] recovers them exactly.
    pub fn to_context_line(&self) -> String {
        let mut parts = Vec::with_capacity(SCALAR_FIELDS.len() + self.micronutrients.len());
        for key in SCALAR_FIELDS {
            if let Some(v) = self.scalar(key) {
                parts.push(format!("{key}={v}"));
            }
        }
        for (key, v) in &self.micronutrients {
            parts.push(format!("{key}={v}"));
        }
        format!("{CONTEXT_LINE_PREFIX} {}", parts.join("; "))
    }

    /// Parses a line produced by [`NutritionFacts::to_context_line`].
    /// Leading whitespace is ignored. Unknown keys become micronutrients.
    pub fn parse_context_line(line: &str) -> Option<NutritionFacts> {
        let body = line.trim_start().strip_prefix(CONTEXT_LINE_PREFIX)?;
        let mut facts = NutritionFacts::zero();
        for part in body.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part.split_once('=')?;
            let value = f64::from_str(value.trim()).ok()?;
            let key = key.trim();
            if !facts.set_scalar(key, value) {
                facts.micronutrients.insert(key.to_string(), value);
            }
        }
        Some(facts)
    }
}
