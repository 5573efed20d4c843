//! Exact cosine-similarity search over the food embedding knowledge base.
//!
//! Rows are L2-normalized on ingestion, so similarity is a plain dot product
//! with the normalized query. Every query is an exhaustive scan.
//!
//! A store is built mutably and then shared behind an `Arc`; `top_k` only
//! needs `&self`, so any number of readers may query concurrently.

mod format;
mod persist;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FoodEmbedding, NutritionFacts};

pub use format::{format_rag_context, RAG_CONTEXT_HEADER};
pub use persist::{read_manifest, write_manifest, ManifestRow, INDEX_FILE, VECTORS_FILE};

/// Width of the default contrastive image/text encoder.
pub const DEFAULT_DIMENSION: usize = 512;

#[derive(Debug, Error)]
pub enum VectorStoreError {
    #[error("vector dimension must be positive")]
    InvalidDimension,
    #[error("dimension mismatch for `{food_id}`: expected {expected}, got {got}")]
    DimensionMismatch {
        food_id: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate food_id `{0}`")]
    DuplicateId(String),
    #[error("zero vector for `{0}` cannot be normalized")]
    ZeroVector(String),
    #[error("non-finite component in vector for `{0}`")]
    NonFinite(String),
    #[error("store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("corrupt store files: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VectorStoreError>;

/// An incoming row before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub food_id: String,
    pub vector: Vec<f64>,
    pub food_label: String,
    pub nutrition: NutritionFacts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub food_id: String,
    pub similarity: f64,
    pub food_label: String,
    pub nutrition: NutritionFacts,
}

#[derive(Debug, Clone)]
pub struct VectorStore {
    dim: usize,
    ids: Vec<String>,
    labels: Vec<String>,
    nutrition: Vec<NutritionFacts>,
    /// Row-major unit vectors, `dim` values per row.
    data: Vec<f64>,
    positions: HashMap<String, usize>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(VectorStoreError::InvalidDimension);
        }
        Ok(VectorStore {
            dim,
            ids: Vec::new(),
            labels: Vec::new(),
            nutrition: Vec::new(),
            data: Vec::new(),
            positions: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, food_id: &str) -> bool {
        self.positions.contains_key(food_id)
    }

    /// Normalized vector of a stored row.
    pub fn vector(&self, food_id: &str) -> Option<&[f64]> {
        self.positions.get(food_id).map(|&i| self.row(i))
    }

    pub fn get(&self, food_id: &str) -> Option<FoodEmbedding> {
        self.positions.get(food_id).map(|&i| self.embedding_at(i))
    }

    /// Stored rows in ingestion order.
    pub fn iter(&self) -> impl Iterator<Item = FoodEmbedding> + '_ {
        (0..self.len()).map(|i| self.embedding_at(i))
    }

    fn embedding_at(&self, i: usize) -> FoodEmbedding {
        FoodEmbedding {
            food_id: self.ids[i].clone(),
            vector: self.row(i).to_vec(),
            food_label: self.labels[i].clone(),
            nutrition: self.nutrition[i].clone(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Validates and normalizes every row, then adds them all. Nothing is
    /// added if any row is rejected.
    pub fn ingest<I>(&mut self, rows: I) -> Result<usize>
    where
        I: IntoIterator<Item = EmbeddingRow>,
    {
        let mut staged: Vec<(EmbeddingRow, Vec<f64>)> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for row in rows {
            if row.vector.len() != self.dim {
                return Err(VectorStoreError::DimensionMismatch {
                    food_id: row.food_id,
                    expected: self.dim,
                    got: row.vector.len(),
                });
            }
            if self.positions.contains_key(&row.food_id) || !seen.insert(row.food_id.clone()) {
                return Err(VectorStoreError::DuplicateId(row.food_id));
            }
            let unit = normalize(&row.vector).map_err(|e| match e {
                NormError::Zero => VectorStoreError::ZeroVector(row.food_id.clone()),
                NormError::NonFinite => VectorStoreError::NonFinite(row.food_id.clone()),
            })?;
            staged.push((row, unit));
        }
        let count = staged.len();
        for (row, unit) in staged {
            self.positions.insert(row.food_id.clone(), self.ids.len());
            self.ids.push(row.food_id);
            self.labels.push(row.food_label);
            self.nutrition.push(row.nutrition);
            self.data.extend_from_slice(&unit);
        }
        Ok(count)
    }

    /// The `k` rows most similar to `query`, skipping ids in `exclude`.
    ///
    /// Hits are ordered by descending similarity, ties by ascending food_id.
    pub fn top_k(
        &self,
        query: &[f64],
        k: usize,
        exclude: Option<&HashSet<String>>,
    ) -> Result<Vec<RetrievalHit>> {
        if k == 0 {
            return Err(VectorStoreError::InvalidK);
        }
        if self.is_empty() {
            return Err(VectorStoreError::EmptyStore);
        }
        if query.len() != self.dim {
            return Err(VectorStoreError::DimensionMismatch {
                food_id: "<query>".into(),
                expected: self.dim,
                got: query.len(),
            });
        }
        let q = normalize(query).map_err(|e| match e {
            NormError::Zero => VectorStoreError::ZeroVector("<query>".into()),
            NormError::NonFinite => VectorStoreError::NonFinite("<query>".into()),
        })?;

        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|&i| exclude.is_none_or(|ex| !ex.contains(&self.ids[i])))
            .map(|i| (dot(&q, self.row(i)).clamp(-1.0, 1.0), i))
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(similarity, i)| RetrievalHit {
                food_id: self.ids[i].clone(),
                similarity,
                food_label: self.labels[i].clone(),
                nutrition: self.nutrition[i].clone(),
            })
            .collect())
    }
}

enum NormError {
    Zero,
    NonFinite,
}

fn normalize(v: &[f64]) -> std::result::Result<Vec<f64>, NormError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NormError::NonFinite);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(NormError::Zero);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
