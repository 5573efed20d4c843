//! Evaluation dataset records and their line-delimited JSON files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nutrilog_core::domain::{Nutrient, NutritionFacts};
use nutrilog_core::gateway::Media;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate dish id `{0}`")]
    DuplicateDish(String),
    #[error("dish `{dish_id}`: {message}")]
    Invalid { dish_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngredientEntry {
    pub name: String,
    pub nutrition: NutritionFacts,
}

/// One dish with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDatasetRecord {
    pub dish_id: String,
    /// Image path, relative to the dataset file unless absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub true_ingredients: Vec<IngredientEntry>,
    pub truth: NutritionFacts,
}

impl EvalDatasetRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |message: String| DatasetError::Invalid {
            dish_id: self.dish_id.clone(),
            message,
        };
        if self.dish_id.trim().is_empty() {
            return Err(invalid("empty dish id".into()));
        }
        if self.media_ref.is_none() && self.description.as_deref().is_none_or(|d| d.trim().is_empty()) {
            return Err(invalid("needs a media_ref or a description".into()));
        }
        for n in Nutrient::ALL {
            let v = self.truth.get(n);
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("truth {} is {v}", n.key())));
            }
        }
        Ok(())
    }

    pub fn ingredient_names(&self) -> HashSet<&str> {
        self.true_ingredients.iter().map(|i| i.name.as_str()).collect()
    }
}

/// Records in file order plus the directory media paths resolve against.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<EvalDatasetRecord>,
    pub base_dir: PathBuf,
}

impl Dataset {
    /// Validates every record and checks dish ids are unique.
    pub fn new(records: Vec<EvalDatasetRecord>, base_dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.dish_id.clone()) {
                return Err(DatasetError::DuplicateDish(r.dish_id.clone()));
            }
        }
        Ok(Dataset {
            records,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let records = read_jsonl(BufReader::new(file), path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(records, base)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Media sent to the model for a record: image bytes when a media path
    /// is set, otherwise the text description.
    pub fn media(&self, record: &EvalDatasetRecord) -> Result<Media, DatasetError> {
        match &record.media_ref {
            Some(rel) => {
                let path = self.base_dir.join(rel);
                let bytes = std::fs::read(&path).map_err(|source| DatasetError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(Media::new(mime_for(&path), bytes))
            }
            None => Ok(Media::text(record.description.clone().unwrap_or_default())),
        }
    }

    /// Every distinct ingredient with the nutrition of its first occurrence.
    pub fn ingredient_universe(&self) -> IngredientUniverse {
        let mut map = BTreeMap::new();
        for r in &self.records {
            for ing in &r.true_ingredients {
                map.entry(ing.name.clone()).or_insert_with(|| ing.nutrition.clone());
            }
        }
        IngredientUniverse { items: map }
    }
}

fn mime_for(path: &Path) -> String {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("txt") => "text/plain",
        _ => "application/octet-stream",
    }
    .to_string()
}

/// All ingredient names across a dataset, sorted by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngredientUniverse {
    pub items: BTreeMap<String, NutritionFacts>,
}

impl IngredientUniverse {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn read_jsonl<T, R>(reader: R, path: &Path) -> Result<Vec<T>, DatasetError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, rows: &[T]) -> io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// A human answer to a dish's follow-up question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub dish_id: String,
    /// The question that was answered. When absent the question is
    /// generated at run time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub answer: String,
}

pub fn load_answers(path: &Path) -> Result<HashMap<String, AnswerRecord>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rows: Vec<AnswerRecord> = read_jsonl(BufReader::new(file), path)?;
    let mut out = HashMap::new();
    for r in rows {
        if out.contains_key(&r.dish_id) {
            return Err(DatasetError::DuplicateDish(r.dish_id));
        }
        out.insert(r.dish_id.clone(), r);
    }
    Ok(out)
}
