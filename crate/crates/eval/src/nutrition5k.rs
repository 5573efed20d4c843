//! Converts Nutrition5k dish metadata into dataset records.
//!
//! Each metadata row is `dish_id, total_calories, total_mass, total_fat,
//! total_carb, total_protein` followed by repeated seven-field ingredient
//! groups `id, name, grams, calories, fat, carb, protein`. The files have
//! no header row.

use std::io::Read;
use std::path::Path;

use nutrilog_core::domain::NutritionFacts;

use crate::dataset::{DatasetError, EvalDatasetRecord, IngredientEntry};

/// Default image location relative to the dataset root.
pub const DEFAULT_IMAGE_TEMPLATE: &str = "imagery/realsense_overhead/{dish_id}/rgb.png";

const DISH_FIELDS: usize = 6;
const INGREDIENT_FIELDS: usize = 7;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Conversion {
    pub records: Vec<EvalDatasetRecord>,
    /// Dishes left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn number(field: &str, what: &str, line: usize) -> Result<f64, DatasetError> {
    field.trim().parse::<f64>().map_err(|_| DatasetError::Parse {
        line,
        message: format!("{what} `{field}` is not a number"),
    })
}

/// Parses metadata rows. With `image_root` set, a dish is kept only if its
/// image exists under that root; `media_ref` is the templated path.
pub fn convert<R: Read>(
    reader: R,
    image_template: &str,
    image_root: Option<&Path>,
) -> Result<Conversion, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Conversion::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.len() < DISH_FIELDS || !(row.len() - DISH_FIELDS).is_multiple_of(INGREDIENT_FIELDS) {
            return Err(DatasetError::Parse {
                line,
                message: format!("unexpected field count {}", row.len()),
            });
        }
        let dish_id = row[0].to_string();
        let truth = NutritionFacts {
            calories: number(&row[1], "total_calories", line)?,
            fat: number(&row[3], "total_fat", line)?,
            carbohydrates: number(&row[4], "total_carb", line)?,
            protein: number(&row[5], "total_protein", line)?,
            ..NutritionFacts::zero()
        };
        let mut ingredients = Vec::new();
        for g in row.iter().skip(DISH_FIELDS).collect::<Vec<_>>().chunks(INGREDIENT_FIELDS) {
            ingredients.push(IngredientEntry {
                name: g[1].to_string(),
                nutrition: NutritionFacts {
                    calories: number(g[3], "ingredient calories", line)?,
                    fat: number(g[4], "ingredient fat", line)?,
                    carbohydrates: number(g[5], "ingredient carb", line)?,
                    protein: number(g[6], "ingredient protein", line)?,
                    ..NutritionFacts::zero()
                },
            });
        }
        let media_ref = image_template.replace("{dish_id}", &dish_id);
        if let Some(root) = image_root {
            if !root.join(&media_ref).is_file() {
                out.skipped.push((dish_id, format!("no image at {media_ref}")));
                continue;
            }
        }
        let record = EvalDatasetRecord {
            dish_id: dish_id.clone(),
            media_ref: Some(media_ref),
            description: None,
            true_ingredients: ingredients,
            truth,
        };
        if let Err(e) = record.validate() {
            out.skipped.push((dish_id, e.to_string()));
            continue;
        }
        out.records.push(record);
    }
    Ok(out)
}
