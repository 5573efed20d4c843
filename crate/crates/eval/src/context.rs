//! Per-dish prompt context: ingredient lists with negative samples and
//! leave-one-out retrieval.

use std::collections::HashSet;

use nutrilog_core::domain::NutritionFacts;
use nutrilog_core::vector_store::{format_rag_context, RetrievalHit, VectorStore, VectorStoreError};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{EvalDatasetRecord, IngredientUniverse};

pub const INGREDIENT_CONTEXT_HEADER: &str =
    "Ingredients that may be present in the food, with their nutritional information:";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextError {
    #[error("dish `{dish_id}` needs {needed} negative ingredients but only {available} are available")]
    DegenerateUniverse {
        dish_id: String,
        needed: usize,
        available: usize,
    },
    #[error("retrieval for `{dish_id}`: {message}")]
    Retrieval { dish_id: String, message: String },
}

/// Seed for one dish, derived from the master seed and the dish id so it
/// does not depend on evaluation order.
pub fn dish_seed(master: u64, dish_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(dish_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextIngredient {
    pub name: String,
    pub nutrition: NutritionFacts,
    /// Whether the dish actually contains it. Never shown to the model.
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngredientContext {
    pub items: Vec<ContextIngredient>,
}

impl IngredientContext {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Prompt block, or `None` when there are no items.
    pub fn block(&self) -> Option<String> {
        if self.items.is_empty() {
            return None;
        }
        let mut out = String::from(INGREDIENT_CONTEXT_HEADER);
        for item in &self.items {
            out.push_str("\n- ");
            out.push_str(&item.name);
            out.push_str("\n   ");
            out.push_str(&item.nutrition.to_context_line());
        }
        Some(out)
    }
}

/// The dish's `k` true ingredients plus `k` others drawn uniformly without
/// replacement from the rest of the universe, shuffled together.
pub fn build_receipt_context(
    record: &EvalDatasetRecord,
    universe: &IngredientUniverse,
    seed: u64,
) -> Result<IngredientContext, ContextError> {
    let truth = record.ingredient_names();
    let mut items: Vec<ContextIngredient> = Vec::new();
    let mut seen = HashSet::new();
    for ing in &record.true_ingredients {
        if seen.insert(ing.name.as_str()) {
            items.push(ContextIngredient {
                name: ing.name.clone(),
                nutrition: ing.nutrition.clone(),
                present: true,
            });
        }
    }
    let k = items.len();
    if k == 0 {
        return Ok(IngredientContext::default());
    }
    let candidates: Vec<(&String, &NutritionFacts)> = universe
        .items
        .iter()
        .filter(|(name, _)| !truth.contains(name.as_str()))
        .collect();
    if candidates.len() < k {
        return Err(ContextError::DegenerateUniverse {
            dish_id: record.dish_id.clone(),
            needed: k,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, candidates.len(), k).into_vec();
    picks.sort_unstable();
    for i in picks {
        let (name, nutrition) = candidates[i];
        items.push(ContextIngredient {
            name: name.clone(),
            nutrition: nutrition.clone(),
            present: false,
        });
    }
    items.shuffle(&mut rng);
    Ok(IngredientContext { items })
}

/// Top `k` neighbours of `query`, never including the dish itself.
pub fn build_rag_context(
    record: &EvalDatasetRecord,
    store: &VectorStore,
    query: &[f64],
    k: usize,
) -> Result<(Vec<RetrievalHit>, Option<String>), ContextError> {
    if k == 0 || store.is_empty() {
        return Ok((Vec::new(), None));
    }
    let exclude = HashSet::from([record.dish_id.clone()]);
    let hits = store
        .top_k(query, k, Some(&exclude))
        .map_err(|e: VectorStoreError| ContextError::Retrieval {
            dish_id: record.dish_id.clone(),
            message: e.to_string(),
        })?;
    let block = (!hits.is_empty()).then(|| format_rag_context(&hits));
    Ok((hits, block))
}
