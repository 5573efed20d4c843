//! Runs ablation conditions over a dataset.

use futures::stream::{self, StreamExt};
use nutrilog_core::domain::{AnswerType, FollowUpTurn, Nutrient, NutritionFacts};
use nutrilog_core::gateway::{ContextSections, FollowUpReply, Gateway, GatewayError};
use nutrilog_core::vector_store::{EmbeddingRow, VectorStore};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{AnswerError, AnswerSource};
use crate::condition::{AblationCondition, FollowUpMode};
use crate::context::{build_rag_context, build_receipt_context, dish_seed};
use crate::dataset::{Dataset, EvalDatasetRecord, IngredientUniverse};

/// Appended to the base prompt when a follow-up question was answered.
pub const FOLLOW_UP_CONTEXT_TEMPLATE: &str =
    "Here is a clarifying question and answer that can help you better understand the food:\n{question}\n{answer}";

/// Mixed into the master seed when drawing the evaluation sample.
const SAMPLE_STREAM: u64 = 0x5a4d_504c_4553_4554;

pub fn follow_up_block(question: &str, answer: &str) -> String {
    FOLLOW_UP_CONTEXT_TEMPLATE
        .replace("{question}", question)
        .replace("{answer}", answer)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("provider failure on dish `{dish_id}`: {source}")]
    Provider {
        dish_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("answers missing for {} dish(es): {}", .0.len(), .0.join(", "))]
    MissingAnswers(Vec<String>),
    #[error(transparent)]
    Answers(#[from] AnswerError),
    #[error("condition `{condition}` wants {wanted:?} follow-ups but the answer source is {actual:?}")]
    ModeMismatch {
        condition: String,
        wanted: FollowUpMode,
        actual: FollowUpMode,
    },
    #[error("condition `{0}` uses retrieval but no embedding store is loaded")]
    NoStore(String),
    #[error("building the embedding store: {0}")]
    Store(String),
}

impl RunError {
    pub fn is_provider_failure(&self) -> bool {
        matches!(self, RunError::Provider { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUpExchange {
    pub question: String,
    pub answer: Option<String>,
    /// Whether the question came from the answers file rather than the model.
    pub recorded: bool,
}

/// Outcome for one dish under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dish_id: String,
    pub truth: NutritionFacts,
    pub prediction: Option<NutritionFacts>,
    /// Why the dish has no prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rag_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_ingredients: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_up: Option<FollowUpExchange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl EvalRecord {
    fn new(record: &EvalDatasetRecord) -> Self {
        EvalRecord {
            dish_id: record.dish_id.clone(),
            truth: record.truth.clone(),
            prediction: None,
            failure: None,
            rag_ids: Vec::new(),
            context_ingredients: Vec::new(),
            follow_up: None,
            warnings: Vec::new(),
            prompt: None,
        }
    }

    fn failed(mut self, reason: String) -> Self {
        tracing::warn!(dish = %self.dish_id, %reason, "dish excluded");
        self.failure = Some(reason);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub dish_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRun {
    pub label: String,
    pub condition: AblationCondition,
    pub records: Vec<EvalRecord>,
}

impl ConditionRun {
    pub fn scored(&self) -> impl Iterator<Item = (&NutritionFacts, &NutritionFacts)> {
        self.records
            .iter()
            .filter_map(|r| r.prediction.as_ref().map(|p| (p, &r.truth)))
    }

    pub fn n_scored(&self) -> usize {
        self.scored().count()
    }

    pub fn exclusions(&self) -> Vec<Exclusion> {
        self.records
            .iter()
            .filter(|r| r.prediction.is_none())
            .map(|r| Exclusion {
                dish_id: r.dish_id.clone(),
                reason: r.failure.clone().unwrap_or_default(),
            })
            .collect()
    }

    /// Predicted and true values of one nutrient over scored dishes.
    pub fn columns(&self, nutrient: Nutrient) -> (Vec<f64>, Vec<f64>) {
        self.scored().map(|(p, t)| (p.get(nutrient), t.get(nutrient))).unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    /// Evaluate a seeded random subset of this many dishes.
    pub sample: Option<usize>,
    /// Keep each rendered generation prompt in the output.
    pub keep_prompts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 8,
            sample: None,
            keep_prompts: false,
        }
    }
}

pub struct Evaluator<'a> {
    dataset: &'a Dataset,
    universe: IngredientUniverse,
    store: Option<&'a VectorStore>,
    gateway: &'a Gateway,
    answers: &'a dyn AnswerSource,
    config: RunConfig,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        dataset: &'a Dataset,
        gateway: &'a Gateway,
        answers: &'a dyn AnswerSource,
        config: RunConfig,
    ) -> Self {
        Evaluator {
            universe: dataset.ingredient_universe(),
            dataset,
            store: None,
            gateway,
            answers,
            config,
        }
    }

    pub fn with_store(mut self, store: &'a VectorStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Dataset positions under evaluation, in dataset order.
    pub fn selected(&self) -> Vec<usize> {
        let n = self.dataset.len();
        match self.config.sample {
            Some(m) if m < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ SAMPLE_STREAM);
                let mut idx = index::sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        }
    }

    pub fn selected_ids(&self) -> Vec<String> {
        self.selected()
            .into_iter()
            .map(|i| self.dataset.records[i].dish_id.clone())
            .collect()
    }

    fn preflight(&self, cond: &AblationCondition) -> Result<(), RunError> {
        if cond.rag && cond.rag_k > 0 && self.store.is_none() {
            return Err(RunError::NoStore(cond.label()));
        }
        if cond.follow_up {
            let actual = self.answers.mode();
            if cond.follow_up_mode != actual {
                return Err(RunError::ModeMismatch {
                    condition: cond.label(),
                    wanted: cond.follow_up_mode,
                    actual,
                });
            }
            let ids = self.selected_ids();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let missing = self.answers.missing(&refs);
            if !missing.is_empty() {
                return Err(RunError::MissingAnswers(missing));
            }
        }
        Ok(())
    }

    /// Evaluates every selected dish. Results are in dataset order no
    /// matter how the work was scheduled.
    pub async fn run_condition(&self, cond: &AblationCondition) -> Result<ConditionRun, RunError> {
        self.preflight(cond)?;
        let workers = if cond.follow_up && cond.follow_up_mode == FollowUpMode::Interactive {
            1
        } else {
            self.config.workers.max(1)
        };
        let mut done: Vec<(usize, Result<EvalRecord, RunError>)> = stream::iter(self.selected())
            .map(|i| async move { (i, self.eval_dish(&self.dataset.records[i], cond).await) })
            .buffer_unordered(workers)
            .collect()
            .await;
        done.sort_by_key(|(i, _)| *i);
        let records = done
            .into_iter()
            .map(|(_, r)| r)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConditionRun {
            label: cond.label(),
            condition: *cond,
            records,
        })
    }

    pub async fn run(&self, conditions: &[AblationCondition]) -> Result<Vec<ConditionRun>, RunError> {
        let mut out = Vec::with_capacity(conditions.len());
        for c in conditions {
            tracing::info!(condition = %c, "evaluating");
            out.push(self.run_condition(c).await?);
        }
        Ok(out)
    }

    async fn eval_dish(
        &self,
        record: &EvalDatasetRecord,
        cond: &AblationCondition,
    ) -> Result<EvalRecord, RunError> {
        let mut out = EvalRecord::new(record);
        let provider_err = |source: GatewayError| RunError::Provider {
            dish_id: record.dish_id.clone(),
            source,
        };
        let seed = dish_seed(self.config.seed, &record.dish_id);
        let media = match self.dataset.media(record) {
            Ok(m) => m,
            Err(e) => return Ok(out.failed(format!("media: {e}"))),
        };
        let mut sections = ContextSections::default();

        if cond.receipt {
            match build_receipt_context(record, &self.universe, seed) {
                Ok(ctx) => {
                    out.context_ingredients = ctx.items.iter().map(|i| i.name.clone()).collect();
                    sections.receipt_context = ctx.block();
                }
                Err(e) => return Ok(out.failed(e.to_string())),
            }
        }

        if cond.rag && cond.rag_k > 0 {
            let store = self.store.ok_or_else(|| RunError::NoStore(cond.label()))?;
            let query = match store.vector(&record.dish_id) {
                Some(v) => v.to_vec(),
                None => match self.gateway.embed(&media).await {
                    Ok(v) => v,
                    Err(e) if e.is_provider_failure() => return Err(provider_err(e)),
                    Err(e) => return Ok(out.failed(format!("embedding: {e}"))),
                },
            };
            match build_rag_context(record, store, &query, cond.rag_k) {
                Ok((hits, block)) => {
                    out.rag_ids = hits.into_iter().map(|h| h.food_id).collect();
                    sections.rag_context = block;
                }
                Err(e) => return Ok(out.failed(e.to_string())),
            }
        }

        if cond.follow_up {
            let turn = match self.answers.recorded_question(&record.dish_id) {
                Some(question) => Some((
                    FollowUpTurn {
                        turn_index: 0,
                        question,
                        answer_type: AnswerType::Text,
                        options: Vec::new(),
                        answer: None,
                        skipped: false,
                    },
                    true,
                )),
                None => match self
                    .gateway
                    .generate_follow_up(None, sections.receipt_context.as_deref(), Some(&media), &[])
                    .await
                {
                    Ok(FollowUpReply::Question { turn, .. }) => Some((turn, false)),
                    Ok(FollowUpReply::NoQuestion) => None,
                    Err(e) if e.is_provider_failure() => return Err(provider_err(e)),
                    Err(e) => {
                        out.warnings.push(format!("follow-up: {e}"));
                        None
                    }
                },
            };
            if let Some((turn, recorded)) = turn {
                let answer = self.answers.answer(&record.dish_id, &turn)?;
                if let Some(a) = &answer {
                    sections.chat_history = Some(follow_up_block(&turn.question, a));
                }
                out.follow_up = Some(FollowUpExchange {
                    question: turn.question,
                    answer,
                    recorded,
                });
            }
        }

        if self.config.keep_prompts {
            out.prompt = self.gateway.catalog().food_log_prompt(&sections).ok();
        }
        match self.gateway.generate_food_log(&sections, Some(&media), &[]).await {
            Ok(v) => {
                out.warnings.extend(v.warnings);
                out.prediction = Some(v.payload.nutrition);
                Ok(out)
            }
            Err(e) if e.is_provider_failure() => Err(provider_err(e)),
            Err(e) => Ok(out.failed(e.to_string())),
        }
    }
}

/// Indexes every dish by its own embedding with its ground truth attached,
/// so each dish can be retrieved for the others.
pub async fn build_store(dataset: &Dataset, gateway: &Gateway, dim: usize) -> Result<VectorStore, RunError> {
    let mut rows = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        let media = dataset.media(r).map_err(|e| RunError::Store(e.to_string()))?;
        let vector = gateway.embed(&media).await.map_err(|source| RunError::Provider {
            dish_id: r.dish_id.clone(),
            source,
        })?;
        rows.push(EmbeddingRow {
            food_id: r.dish_id.clone(),
            vector,
            food_label: r.description.clone().unwrap_or_else(|| r.dish_id.clone()),
            nutrition: r.truth.clone(),
        });
    }
    let mut store = VectorStore::new(dim).map_err(|e| RunError::Store(e.to_string()))?;
    store.ingest(rows).map_err(|e| RunError::Store(e.to_string()))?;
    Ok(store)
}
