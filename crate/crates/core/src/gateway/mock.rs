//! Deterministic offline provider.
//!
//! Every response is a pure function of the request. The rules:
//!
//! * `generate_log`: every `nutrition:` line in the prompt is parsed and the
//!   field-wise mean is returned. With no such lines the values are drawn
//!   from a generator seeded by a SHA-256 of the whole request, mapped into
//!   plausible ranges (calories 50–900 kcal, protein 0–60 g, carbohydrates
//!   0–120 g, fat 0–60 g, fiber 0–15 g, sugar 0–40 g, cholesterol 0–300 mg).
//! * `follow_up`: keyword rules on the media subject (see [`MockProvider`]).
//!   Once the history holds a user answer the mock reports sufficiency,
//!   except for subjects containing `mystery`, which always get a question.
//! * `parse_receipt`: receipt text, one item per line as `name, quantity`.
//!   Lines starting with `#` are header lines; the last header line names
//!   the store (text after a `:` if present).
//! * `classify_question`: keyword rules ("percentage" → consumption ratio,
//!   "how many/much" → quantity, "prepared/cooked/homemade" → preparation).
//!
//! Media whose bytes start with `fixture:` carry their subject in clear text,
//! e.g. `fixture:pizza` stands in for a photo of pizza.

use std::collections::HashMap;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Media, ModelProvider, ModelRequest, ProviderError, Role, Task, NO_QUESTION};
use crate::domain::{FoodLogPayload, NutritionFacts};

pub const MOCK_FIXTURE_PREFIX: &str = "fixture:";

/// Simple foods that need no clarification.
const SINGLE_INGREDIENT_FOODS: &[&str] = &[
    "banana", "apple", "orange", "pear", "peach", "plum", "grapes", "egg", "kiwi", "mango",
    "avocado", "carrot", "water", "coffee",
];

/// `(subject keyword, follow-up line)`, first match wins.
const FOLLOW_UP_RULES: &[(&str, &str)] = &[
    ("pizza", "How many slices of pizza did you eat?;select;[1,2,3,4,5,6,7,8,9,10]"),
    ("burrito", "What is inside of your burrito?;text;[]"),
    ("lasagna", "Are there any unseen ingredients in the lasagna?;select;[yes,no]"),
    ("curry", "Is this curry homemade?;select;[yes,no]"),
    ("chicken", "How was the chicken cooked?;select;[roasted,fried,other]"),
    (
        "vegetable",
        "How were the vegetables prepared?;select;[stir fried,steamed,raw,other]",
    ),
    (
        "protein shake",
        "Was this protein shake store bought or homemade?;select;[store bough,homemade]",
    ),
    ("protein powder", "Where did you buy your protein powder from?;text;[]"),
    ("yogurt", "Is this the Chobani yogurt you bought from Safeway?;select;[yes,no]"),
];

const DEFAULT_FOLLOW_UP: &str = "What percentage of the food did you consume?;text;[]";
const PERSISTENT_FOLLOW_UP: &str = "What else is in this dish?;text;[]";

#[derive(Debug, Clone)]
pub struct MockProvider {
    dim: usize,
    embeddings: HashMap<Vec<u8>, Vec<f64>>,
}

impl MockProvider {
    pub fn new(embedding_dim: usize) -> Self {
        MockProvider {
            dim: embedding_dim,
            embeddings: HashMap::new(),
        }
    }

    /// Pins the embedding returned for media with exactly these bytes.
    pub fn with_embedding(mut self, bytes: impl Into<Vec<u8>>, vector: Vec<f64>) -> Self {
        self.embeddings.insert(bytes.into(), vector);
        self
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    /// The synchronous core of [`ModelProvider::complete`].
    pub fn respond(&self, request: &ModelRequest) -> String {
        match request.task {
            Task::GenerateLog => generate_log(request),
            Task::FollowUp => follow_up(request),
            Task::ParseReceipt => parse_receipt(request),
            Task::ClassifyQuestion => classify(request),
        }
    }

    pub fn embed_sync(&self, media: &Media) -> Vec<f64> {
        if let Some(v) = self.embeddings.get(&media.bytes) {
            return v.clone();
        }
        let mut hasher = Sha256::new();
        hasher.update(b"embed\0");
        hasher.update(media.mime.as_bytes());
        hasher.update([0]);
        hasher.update(&media.bytes);
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

#[async_trait]
impl ModelProvider for MockProvider {
    async fn complete(&self, request: &ModelRequest) -> Result<String, ProviderError> {
        Ok(self.respond(request))
    }

    async fn embed(&self, media: &Media) -> Result<Vec<f64>, ProviderError> {
        Ok(self.embed_sync(media))
    }
}

fn request_seed(request: &ModelRequest) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(request.task.as_str().as_bytes());
    hasher.update([0]);
    hasher.update(request.prompt_text.as_bytes());
    hasher.update([0]);
    if let Some(media) = &request.media {
        hasher.update(media.mime.as_bytes());
        hasher.update([0]);
        hasher.update(&media.bytes);
    }
    for entry in &request.history {
        hasher.update([0]);
        hasher.update(entry.role.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(entry.text.as_bytes());
    }
    hasher.finalize().into()
}

/// Readable subject of the media, if the bytes are text or a fixture tag.
fn media_subject(media: Option<&Media>) -> Option<String> {
    let text = std::str::from_utf8(&media?.bytes).ok()?.trim();
    let text = text.strip_prefix(MOCK_FIXTURE_PREFIX).unwrap_or(text).trim();
    let first_line = text.lines().next().unwrap_or("").trim();
    (!first_line.is_empty()).then(|| first_line.to_string())
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn generate_log(request: &ModelRequest) -> String {
    let rows: Vec<NutritionFacts> = request
        .prompt_text
        .lines()
        .filter_map(NutritionFacts::parse_context_line)
        .collect();
    let nutrition = NutritionFacts::mean(&rows).unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::from_seed(request_seed(request));
        let fat = round1(rng.gen_range(0.0..60.0));
        let saturated = (fat * rng.gen_range(0.0..0.5) * 10.0).floor() / 10.0;
        let mut facts = NutritionFacts {
            calories: round1(rng.gen_range(50.0..900.0)),
            protein: round1(rng.gen_range(0.0..60.0)),
            carbohydrates: round1(rng.gen_range(0.0..120.0)),
            fat,
            fiber: round1(rng.gen_range(0.0..15.0)),
            sugar: round1(rng.gen_range(0.0..40.0)),
            saturated_fat: Some(saturated),
            cholesterol: round1(rng.gen_range(0.0..300.0)),
            ..NutritionFacts::zero()
        };
        facts
            .micronutrients
            .insert("potassium_mg".into(), rng.gen_range(0.0..900.0f64).round());
        facts
            .micronutrients
            .insert("sodium_mg".into(), rng.gen_range(0.0..1500.0f64).round());
        facts
    });

    let item = request
        .prompt_text
        .lines()
        .find_map(|l| l.strip_prefix("Item: "))
        .map(|s| s.trim().to_string());
    let subject = item.or_else(|| media_subject(request.media.as_ref()));
    let (meal_name, ingredients) = match &subject {
        Some(s) => (s.clone(), split_ingredients(s)),
        None => ("Meal".to_string(), vec!["mixed meal".to_string()]),
    };
    FoodLogPayload {
        meal_name,
        ingredients,
        serving_size: "1 serving".into(),
        meal_type: None,
        date: None,
        nutrition,
    }
    .to_json()
}

fn split_ingredients(subject: &str) -> Vec<String> {
    let lowered = subject.to_lowercase();
    let mut parts = vec![lowered.as_str()];
    for sep in [",", " and ", " with ", "&"] {
        parts = parts.into_iter().flat_map(|p| p.split(sep)).collect();
    }
    let out: Vec<String> = parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect();
    if out.is_empty() {
        vec![lowered]
    } else {
        out
    }
}

fn follow_up(request: &ModelRequest) -> String {
    let subject = media_subject(request.media.as_ref())
        .unwrap_or_default()
        .to_lowercase();
    if subject.contains("mystery") {
        return PERSISTENT_FOLLOW_UP.to_string();
    }
    let answered = request
        .history
        .iter()
        .filter(|e| e.role == Role::User)
        .count();
    if answered > 0 {
        return NO_QUESTION.to_string();
    }
    let bare = subject.strip_prefix("single:").map(str::trim);
    if bare.is_some() || SINGLE_INGREDIENT_FOODS.contains(&subject.trim()) {
        return NO_QUESTION.to_string();
    }
    FOLLOW_UP_RULES
        .iter()
        .find(|(keyword, _)| subject.contains(keyword))
        .map(|(_, line)| line.to_string())
        .unwrap_or_else(|| DEFAULT_FOLLOW_UP.to_string())
}

#[derive(Serialize)]
struct ReceiptLine {
    name: String,
    quantity: String,
    source: String,
}

fn parse_receipt(request: &ModelRequest) -> String {
    let text = request
        .media
        .as_ref()
        .and_then(|m| std::str::from_utf8(&m.bytes).ok())
        .unwrap_or("");
    let mut source = String::new();
    let mut items = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(header) = line.strip_prefix('#') {
            let header = header.trim();
            source = header
                .rsplit_once(':')
                .map(|(_, s)| s.trim())
                .unwrap_or(header)
                .to_string();
            continue;
        }
        let upper = line.to_ascii_uppercase();
        if ["TOTAL", "SUBTOTAL", "TAX"].iter().any(|k| upper.starts_with(k)) {
            continue;
        }
        let (name, quantity) = match line.split_once(',') {
            Some((n, q)) => (n.trim(), q.trim()),
            None => (line, "1"),
        };
        items.push(ReceiptLine {
            name: name.to_string(),
            quantity: quantity.to_string(),
            source: String::new(),
        });
    }
    for item in &mut items {
        item.source = source.clone();
    }
    serde_json::to_string(&items).expect("receipt lines serialize")
}

#[derive(Serialize)]
struct Classification<'a> {
    question: &'a str,
    category: &'static str,
}

fn classify(request: &ModelRequest) -> String {
    let question = request
        .prompt_text
        .rsplit_once("Here is the question:")
        .map(|(_, q)| q.trim())
        .unwrap_or(request.prompt_text.trim());
    let category = classify_by_keywords(question);
    serde_json::to_string(&Classification {
        question,
        category: category.label(),
    })
    .expect("classification serializes")
}

fn classify_by_keywords(question: &str) -> super::QuestionCategory {
    use super::QuestionCategory as C;
    let q = question.to_lowercase();
    let any = |words: &[&str]| words.iter().any(|w| q.contains(w));
    if any(&["percentage", "portion of", "how much of", "fraction", "did you finish"]) {
        C::ConsumptionRatio
    } else if any(&["how many", "how much"]) {
        C::QuantityPortion
    } else if any(&[
        "prepared",
        "cooked",
        "homemade",
        "store bought",
        "bought",
        "buy",
        "restaurant",
        "where did",
    ]) {
        C::PreparationSource
    } else if any(&[
        "what is inside",
        "what is in",
        "what kind",
        "what type",
        "which",
        "ingredient",
        "brand",
        "flavor",
        "topping",
        "filling",
        "is this",
        "is it",
    ]) {
        C::FoodTypeDetail
    } else {
        C::None
    }
}
