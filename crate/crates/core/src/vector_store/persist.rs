//! On-disk formats for the embedding corpus.
//!
//! * Manifest: JSON Lines, one object per row with `food_id`, `vector`,
//!   `food_label` and either a nested `nutrition` object or the nutrition
//!   fields inline.
//! * Store snapshot: `vectors.f32` holds little-endian 32-bit floats, row
//!   major; `index.tsv` holds one tab-separated line per row with id, label
//!   and nutrition columns, preceded by a `# dim=<n> rows=<m>` line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EmbeddingRow, Result, VectorStore, VectorStoreError};
use crate::domain::NutritionFacts;

pub const VECTORS_FILE: &str = "vectors.f32";
pub const INDEX_FILE: &str = "index.tsv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub food_id: String,
    pub vector: Vec<f64>,
    pub food_label: String,
    pub nutrition: NutritionFacts,
}

impl From<ManifestRow> for EmbeddingRow {
    fn from(r: ManifestRow) -> Self {
        EmbeddingRow {
            food_id: r.food_id,
            vector: r.vector,
            food_label: r.food_label,
            nutrition: r.nutrition,
        }
    }
}

/// Reads a JSON Lines manifest. Blank lines are skipped.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<EmbeddingRow>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| VectorStoreError::Manifest {
            line: i + 1,
            message,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| bad("expected a JSON object".into()))?;
        let food_id = match obj.get("food_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing `food_id`".into())),
        };
        let vector: Vec<f64> = obj
            .get("vector")
            .cloned()
            .ok_or_else(|| bad("missing `vector`".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| bad(e.to_string())))?;
        let food_label = obj
            .get("food_label")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let nutrition_value = match obj.get("nutrition") {
            Some(n @ Value::Object(_)) => n.clone(),
            _ => value.clone(),
        };
        let nutrition: NutritionFacts =
            serde_json::from_value(nutrition_value).map_err(|e| bad(e.to_string()))?;
        rows.push(EmbeddingRow {
            food_id,
            vector,
            food_label,
            nutrition,
        });
    }
    Ok(rows)
}

pub fn write_manifest<W: Write>(mut writer: W, rows: &[ManifestRow]) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut writer, row)
            .map_err(|e| VectorStoreError::Corrupt(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

impl VectorStore {
    /// Builds a store from a manifest file.
    pub fn from_manifest(path: &Path, dim: usize) -> Result<Self> {
        let rows = read_manifest(BufReader::new(File::open(path)?))?;
        let mut store = VectorStore::new(dim)?;
        store.ingest(rows)?;
        Ok(store)
    }

    /// Writes `vectors.f32` and `index.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut vectors = BufWriter::new(File::create(dir.join(VECTORS_FILE))?);
        for x in &self.data {
            vectors.write_all(&(*x as f32).to_le_bytes())?;
        }
        vectors.flush()?;

        let mut index = BufWriter::new(File::create(dir.join(INDEX_FILE))?);
        writeln!(index, "# dim={} rows={}", self.dim, self.len())?;
        let mut tsv = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .has_headers(false)
            .from_writer(index);
        tsv.write_record(INDEX_COLUMNS)
            .map_err(|e| VectorStoreError::Corrupt(e.to_string()))?;
        for i in 0..self.len() {
            let n = &self.nutrition[i];
            let micros = n
                .micronutrients
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("|");
            let record = [
                self.ids[i].clone(),
                self.labels[i].clone(),
                n.calories.to_string(),
                n.protein.to_string(),
                n.carbohydrates.to_string(),
                n.fat.to_string(),
                n.fiber.to_string(),
                n.sugar.to_string(),
                n.saturated_fat.map(|v| v.to_string()).unwrap_or_default(),
                n.cholesterol.to_string(),
                micros,
            ];
            tsv.write_record(&record)
                .map_err(|e| VectorStoreError::Corrupt(e.to_string()))?;
        }
        tsv.flush()?;
        Ok(())
    }

    /// Loads a snapshot written by [`VectorStore::save`]. Vectors are
    /// re-normalized after widening from f32.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut index = BufReader::new(File::open(dir.join(INDEX_FILE))?);
        let mut first = String::new();
        index.read_line(&mut first)?;
        let (dim, rows) = parse_index_header(&first)?;

        let mut bytes = Vec::new();
        File::open(dir.join(VECTORS_FILE))?.read_to_end(&mut bytes)?;
        if bytes.len() != dim * rows * 4 {
            return Err(VectorStoreError::Corrupt(format!(
                "{VECTORS_FILE} has {} bytes, expected {}",
                bytes.len(),
                dim * rows * 4
            )));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();

        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .has_headers(true)
            .from_reader(index);
        let mut out = Vec::with_capacity(rows);
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| VectorStoreError::Corrupt(e.to_string()))?;
            if i >= rows {
                return Err(VectorStoreError::Corrupt("more index rows than vectors".into()));
            }
            out.push(EmbeddingRow {
                food_id: record[0].to_string(),
                vector: floats[i * dim..(i + 1) * dim].to_vec(),
                food_label: record[1].to_string(),
                nutrition: parse_nutrition_columns(&record)?,
            });
        }
        if out.len() != rows {
            return Err(VectorStoreError::Corrupt(format!(
                "index lists {} rows, header says {rows}",
                out.len()
            )));
        }
        let mut store = VectorStore::new(dim)?;
        store.ingest(out)?;
        Ok(store)
    }
}

const INDEX_COLUMNS: [&str; 11] = [
    "food_id",
    "food_label",
    "calories",
    "protein",
    "carbohydrates",
    "fat",
    "fiber",
    "sugar",
    "saturated_fat",
    "cholesterol",
    "micronutrients",
];

fn parse_index_header(line: &str) -> Result<(usize, usize)> {
    let corrupt = || VectorStoreError::Corrupt(format!("bad index header `{}`", line.trim()));
    let body = line.trim().strip_prefix('#').ok_or_else(corrupt)?;
    let mut dim = None;
    let mut rows = None;
    for part in body.split_whitespace() {
        if let Some(v) = part.strip_prefix("dim=") {
            dim = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("rows=") {
            rows = v.parse().ok();
        }
    }
    Ok((dim.ok_or_else(corrupt)?, rows.ok_or_else(corrupt)?))
}

fn parse_nutrition_columns(record: &csv::StringRecord) -> Result<NutritionFacts> {
    let num = |i: usize| -> Result<f64> {
        record[i]
            .parse::<f64>()
            .map_err(|_| VectorStoreError::Corrupt(format!("bad number `{}`", &record[i])))
    };
    let mut n = NutritionFacts {
        calories: num(2)?,
        protein: num(3)?,
        carbohydrates: num(4)?,
        fat: num(5)?,
        fiber: num(6)?,
        sugar: num(7)?,
        saturated_fat: if record[8].is_empty() {
            None
        } else {
            Some(num(8)?)
        },
        cholesterol: num(9)?,
        ..NutritionFacts::zero()
    };
    for pair in record[10].split('|').filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| VectorStoreError::Corrupt(format!("bad micronutrient `{pair}`")))?;
        let v = v
            .parse::<f64>()
            .map_err(|_| VectorStoreError::Corrupt(format!("bad micronutrient `{pair}`")))?;
        n.micronutrients.insert(k.to_string(), v);
    }
    Ok(n)
}
