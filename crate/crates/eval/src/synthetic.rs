//! Seeded synthetic datasets for smoke runs and tests.

use nutrilog_core::domain::NutritionFacts;
use nutrilog_core::gateway::Gateway;
use nutrilog_core::vector_store::{EmbeddingRow, VectorStore};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AnswerRecord, Dataset, EvalDatasetRecord, IngredientEntry};
use crate::runner::RunError;

const VOCABULARY: [&str; 24] = [
    "rice", "chicken", "broccoli", "egg", "tofu", "salmon", "potato", "carrot", "spinach",
    "beef", "pasta", "tomato", "cheese", "bread", "apple", "banana", "beans", "corn", "yogurt",
    "lettuce", "onion", "pepper", "mushroom", "avocado",
];

/// Multiples of 0.5 so sums and means of a few values stay exact.
fn half_steps(rng: &mut ChaCha8Rng, max: u32) -> f64 {
    f64::from(rng.gen_range(0..=max * 2)) / 2.0
}

fn facts(rng: &mut ChaCha8Rng, scale: u32) -> NutritionFacts {
    NutritionFacts {
        calories: half_steps(rng, 120 * scale),
        protein: half_steps(rng, 10 * scale),
        carbohydrates: half_steps(rng, 15 * scale),
        fat: half_steps(rng, 8 * scale),
        ..NutritionFacts::zero()
    }
}

/// `n` text-described dishes with 1 to 4 ingredients each.
pub fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let k = rng.gen_range(1..=4);
            let picks = index::sample(&mut rng, VOCABULARY.len(), k).into_vec();
            let names: Vec<&str> = picks.iter().map(|&j| VOCABULARY[j]).collect();
            let ingredients: Vec<IngredientEntry> = names
                .iter()
                .map(|name| IngredientEntry {
                    name: name.to_string(),
                    nutrition: facts(&mut rng, 1),
                })
                .collect();
            let mut truth = NutritionFacts::zero();
            for ing in &ingredients {
                truth.accumulate(&ing.nutrition);
            }
            EvalDatasetRecord {
                dish_id: format!("dish_{i:04}"),
                media_ref: None,
                description: Some(format!("Item: {} (plate {i})", names.join(" and "))),
                true_ingredients: ingredients,
                truth,
            }
        })
        .collect();
    Dataset::new(records, ".").expect("synthetic records are valid")
}

/// Scripted answers for every dish in `dataset`.
pub fn synthetic_answers(dataset: &Dataset) -> Vec<AnswerRecord> {
    dataset
        .records
        .iter()
        .map(|r| AnswerRecord {
            dish_id: r.dish_id.clone(),
            question: None,
            answer: "I ate all of it.".into(),
        })
        .collect()
}

/// A store holding `copies` rows per dish whose vector equals the dish's
/// query embedding and whose nutrition is the dish's ground truth. The dish
/// rows themselves are absent, so every dish's nearest neighbours carry its
/// own nutrition.
pub async fn grounded_store(
    dataset: &Dataset,
    gateway: &Gateway,
    dim: usize,
    copies: usize,
) -> Result<VectorStore, RunError> {
    let mut rows = Vec::with_capacity(dataset.len() * copies);
    for r in &dataset.records {
        let media = dataset.media(r).map_err(|e| RunError::Store(e.to_string()))?;
        let vector = gateway.embed(&media).await.map_err(|source| RunError::Provider {
            dish_id: r.dish_id.clone(),
            source,
        })?;
        for c in 0..copies {
            rows.push(EmbeddingRow {
                food_id: format!("{}#ref{c}", r.dish_id),
                vector: vector.clone(),
                food_label: format!("reference for {}", r.dish_id),
                nutrition: r.truth.clone(),
            });
        }
    }
    let mut store = VectorStore::new(dim).map_err(|e| RunError::Store(e.to_string()))?;
    store.ingest(rows).map_err(|e| RunError::Store(e.to_string()))?;
    Ok(store)
}
