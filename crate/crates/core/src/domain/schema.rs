//! Validation and normalization of generated food-log documents.
//!
//! The canonical document is a flat JSON object:
//!
//! ```json
//! {"meal_name": "...", "ingredients": ["..."], "serving_size": "...",
//!  "calories": 280, "protein": 11, "carbohydrates": 16, "fat": 20,
//!  "fiber": 4, "sugar": 7, "cholesterol": 0,
//!  "micronutrients": {"potassium_mg": 450}}
//! ```
//!
//! `meal_type`, `date` and `saturated_fat` are optional.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::nutrition::NutritionFacts;
use super::records::MealType;

pub const REQUIRED_KEYS: [&str; 11] = [
    "meal_name",
    "ingredients",
    "serving_size",
    "calories",
    "protein",
    "carbohydrates",
    "fat",
    "fiber",
    "sugar",
    "cholesterol",
    "micronutrients",
];

pub const OPTIONAL_KEYS: [&str; 3] = ["meal_type", "date", "saturated_fat"];

const NUMERIC_REQUIRED: [&str; 7] = [
    "calories",
    "protein",
    "carbohydrates",
    "fat",
    "fiber",
    "sugar",
    "cholesterol",
];

/// A normalized food-log document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodLogPayload {
    pub meal_name: String,
    pub ingredients: Vec<String>,
    pub serving_size: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meal_type: Option<MealType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    #[serde(flatten)]
    pub nutrition: NutritionFacts,
}

impl FoodLogPayload {
    /// Canonical JSON text of the payload.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("document is not valid JSON: {0}")]
    Parse(String),
    #[error("document is not a JSON object")]
    NotAnObject,
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("`{key}` must be {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("`{key}` is negative ({value})")]
    Negative { key: String, value: f64 },
    #[error("`{key}` is a range (`{text}`), expected a single number")]
    Range { key: String, text: String },
    #[error("`{key}` is not a scalar number")]
    NonScalar { key: String },
    #[error("`{key}` is not numeric (`{text}`)")]
    NotNumeric { key: String, text: String },
    #[error("`{key}` is not finite")]
    NonFinite { key: String },
    #[error("saturated_fat ({saturated}) exceeds fat ({fat})")]
    SaturatedExceedsFat { saturated: f64, fat: f64 },
}

/// Result of a successful validation: the payload plus any normalization
/// notes (units stripped, fences removed, unknown keys ignored).
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedLog {
    pub payload: FoodLogPayload,
    pub warnings: Vec<String>,
}

/// Validates a generated document and returns the normalized payload, or
/// every problem found.
pub fn validate_food_log_json(document: &str) -> Result<ValidatedLog, Vec<SchemaError>> {
    let mut warnings = Vec::new();
    let text = strip_code_fence(document, &mut warnings);
    let value: Value =
        serde_json::from_str(text).map_err(|e| vec![SchemaError::Parse(e.to_string())])?;
    match value {
        Value::Object(map) => validate_object(&map, warnings),
        _ => Err(vec![SchemaError::NotAnObject]),
    }
}

/// Validates an already-parsed JSON object.
pub fn validate_food_log_value(value: &Value) -> Result<ValidatedLog, Vec<SchemaError>> {
    match value {
        Value::Object(map) => validate_object(map, Vec::new()),
        _ => Err(vec![SchemaError::NotAnObject]),
    }
}

fn strip_code_fence<'a>(document: &'a str, warnings: &mut Vec<String>) -> &'a str {
    let trimmed = document.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        if let Some(inner) = rest.trim_end().strip_suffix("```") {
            warnings.push("removed markdown code fence around document".to_string());
            return inner.trim();
        }
    }
    trimmed
}

fn validate_object(
    map: &Map<String, Value>,
    mut warnings: Vec<String>,
) -> Result<ValidatedLog, Vec<SchemaError>> {
    let mut errors = Vec::new();
    for key in REQUIRED_KEYS {
        if !map.contains_key(key) {
            errors.push(SchemaError::MissingKey(key));
        }
    }
    for key in map.keys() {
        if !REQUIRED_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
            warnings.push(format!("ignored unknown key `{key}`"));
        }
    }

    let meal_name = map
        .get("meal_name")
        .and_then(|v| expect_string(v, "meal_name", &mut errors));
    let serving_size = map
        .get("serving_size")
        .and_then(|v| expect_string(v, "serving_size", &mut errors));
    let ingredients = map.get("ingredients").and_then(|v| match v {
        Value::Array(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) => out.push(s.clone()),
                    _ => {
                        errors.push(SchemaError::WrongType {
                            key: "ingredients".into(),
                            expected: "a list of strings",
                        });
                        return None;
                    }
                }
            }
            Some(out)
        }
        _ => {
            errors.push(SchemaError::WrongType {
                key: "ingredients".into(),
                expected: "a list of strings",
            });
            None
        }
    });

    let mut nutrition = NutritionFacts::zero();
    for key in NUMERIC_REQUIRED {
        if let Some(v) = map.get(key) {
            if let Some(n) = coerce_number(key, v, &mut errors, &mut warnings) {
                nutrition.set_scalar(key, n);
            }
        }
    }
    if let Some(v) = map.get("saturated_fat") {
        if !v.is_null() {
            if let Some(n) = coerce_number("saturated_fat", v, &mut errors, &mut warnings) {
                nutrition.saturated_fat = Some(n);
            }
        }
    }
    match map.get("micronutrients") {
        Some(Value::Object(micros)) => {
            for (name, v) in micros {
                let key = format!("micronutrients.{name}");
                if matches!(v, Value::Array(_) | Value::Object(_)) {
                    errors.push(SchemaError::NonScalar { key });
                    continue;
                }
                if let Some(n) = coerce_number(&key, v, &mut errors, &mut warnings) {
                    nutrition.micronutrients.insert(name.clone(), n);
                }
            }
        }
        Some(_) => errors.push(SchemaError::WrongType {
            key: "micronutrients".into(),
            expected: "an object of name to number",
        }),
        None => {}
    }
    if let Some(sat) = nutrition.saturated_fat {
        let fat_ok = map.contains_key("fat") && !errors.iter().any(|e| error_key(e) == Some("fat"));
        if fat_ok && sat > nutrition.fat {
            errors.push(SchemaError::SaturatedExceedsFat {
                saturated: sat,
                fat: nutrition.fat,
            });
        }
    }

    let meal_type = match map.get("meal_type") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => match s.parse::<MealType>() {
            Ok(t) => Some(t),
            Err(_) => {
                warnings.push(format!("ignored unrecognized meal_type `{s}`"));
                None
            }
        },
        Some(_) => {
            errors.push(SchemaError::WrongType {
                key: "meal_type".into(),
                expected: "a string",
            });
            None
        }
    };
    let date = match map.get("date") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errors.push(SchemaError::WrongType {
                key: "date".into(),
                expected: "a string",
            });
            None
        }
    };

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(ValidatedLog {
        payload: FoodLogPayload {
            meal_name: meal_name.expect("checked"),
            ingredients: ingredients.expect("checked"),
            serving_size: serving_size.expect("checked"),
            meal_type,
            date,
            nutrition,
        },
        warnings,
    })
}

fn error_key(e: &SchemaError) -> Option<&str> {
    match e {
        SchemaError::WrongType { key, .. }
        | SchemaError::Negative { key, .. }
        | SchemaError::Range { key, .. }
        | SchemaError::NonScalar { key }
        | SchemaError::NotNumeric { key, .. }
        | SchemaError::NonFinite { key } => Some(key),
        _ => None,
    }
}

fn expect_string(v: &Value, key: &str, errors: &mut Vec<SchemaError>) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        _ => {
            errors.push(SchemaError::WrongType {
                key: key.into(),
                expected: "a string",
            });
            None
        }
    }
}

fn coerce_number(
    key: &str,
    v: &Value,
    errors: &mut Vec<SchemaError>,
    warnings: &mut Vec<String>,
) -> Option<f64> {
    let n = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match parse_numeric_text(s) {
            NumericText::Plain(n) => {
                warnings.push(format!("`{key}` given as text, coerced to number"));
                Some(n)
            }
            NumericText::WithUnit(n, unit) => {
                warnings.push(format!("stripped unit `{unit}` from `{key}`"));
                Some(n)
            }
            NumericText::Range => {
                errors.push(SchemaError::Range {
                    key: key.into(),
                    text: s.clone(),
                });
                return None;
            }
            NumericText::Invalid => {
                errors.push(SchemaError::NotNumeric {
                    key: key.into(),
                    text: s.clone(),
                });
                return None;
            }
        },
        Value::Array(_) | Value::Object(_) => {
            errors.push(SchemaError::NonScalar { key: key.into() });
            return None;
        }
        _ => {
            errors.push(SchemaError::WrongType {
                key: key.into(),
                expected: "a number",
            });
            return None;
        }
    };
    let n = match n {
        Some(n) if n.is_finite() => n,
        _ => {
            errors.push(SchemaError::NonFinite { key: key.into() });
            return None;
        }
    };
    if n < 0.0 {
        errors.push(SchemaError::Negative {
            key: key.into(),
            value: n,
        });
        return None;
    }
    Some(n)
}

enum NumericText {
    Plain(f64),
    WithUnit(f64, String),
    Range,
    Invalid,
}

/// Splits text such as `"12.5 g"` into a number and a unit suffix.
fn parse_numeric_text(text: &str) -> NumericText {
    let s = text.trim();
    let (number, rest) = split_leading_number(s);
    let Some(value) = number.and_then(|n| n.parse::<f64>().ok()) else {
        return NumericText::Invalid;
    };
    let rest = rest.trim();
    if rest.is_empty() {
        return NumericText::Plain(value);
    }
    // "10-20", "10 - 20 g", "10 to 20"
    let after_sep = rest
        .strip_prefix('-')
        .or_else(|| rest.strip_prefix('–'))
        .or_else(|| rest.strip_prefix("to "));
    if let Some(tail) = after_sep {
        if split_leading_number(tail.trim()).0.is_some() {
            return NumericText::Range;
        }
    }
    if rest
        .chars()
        .all(|c| c.is_alphabetic() || c == '%' || c == ' ' || c == '.' || c == 'µ')
    {
        return NumericText::WithUnit(value, rest.to_string());
    }
    NumericText::Invalid
}

fn split_leading_number(s: &str) -> (Option<&str>, &str) {
    let bytes = s.as_bytes();
    let mut end = 0;
    if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    let int_digits = end - digits_start;
    let mut frac_digits = 0;
    if end < bytes.len() && bytes[end] == b'.' {
        let dot = end;
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
            frac_digits += 1;
        }
        if frac_digits == 0 {
            end = dot;
        }
    }
    if int_digits + frac_digits == 0 {
        return (None, s);
    }
    (Some(&s[..end]), &s[end..])
}
