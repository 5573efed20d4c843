//! Offline evaluation of nutrition estimates under context ablations.
//!
//! A run evaluates a dataset under one or more [`AblationCondition`]s,
//! scores predictions with MAE and RMSE, and attaches percentile bootstrap
//! intervals. Everything in an [`EvalRun`] is a function of the inputs and
//! the master seed, independent of worker count.

pub mod answers;
pub mod condition;
pub mod context;
pub mod dataset;
pub mod metrics;
pub mod nutrition5k;
pub mod report;
pub mod runner;
pub mod synthetic;

use std::io;

use nutrilog_core::gateway::Gateway;
use nutrilog_core::vector_store::VectorStore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use answers::{AnswerSource, NoAnswers, ScriptedAnswers, StdioAnswers, TerminalAnswers};
pub use condition::{AblationCondition, FollowUpMode, DEFAULT_RAG_K};
pub use context::{build_rag_context, build_receipt_context, dish_seed, IngredientContext};
pub use dataset::{AnswerRecord, Dataset, EvalDatasetRecord, IngredientEntry, IngredientUniverse};
pub use metrics::{bootstrap_ci, mae, percentile, rmse, Interval, Metric, DEFAULT_ALPHA, DEFAULT_REPLICATES};
pub use report::{all_reports, emit_exclusions, emit_report, format_cell, MetricReport};
pub use runner::{build_store, ConditionRun, EvalRecord, Evaluator, RunConfig, RunError};

/// Process exit code for invalid input.
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit code when the model provider fails.
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl EvalError {
    pub fn exit_code(&self) -> i32 {
        match self {
            EvalError::Run(e) if e.is_provider_failure() => EXIT_PROVIDER,
            _ => EXIT_VALIDATION,
        }
    }
}

/// The complete, serializable result of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub seed: u64,
    pub replicates: usize,
    pub alpha: f64,
    pub dataset_size: usize,
    pub evaluated: usize,
    pub conditions: Vec<ConditionRun>,
    pub reports: Vec<MetricReport>,
}

impl EvalRun {
    pub fn table(&self) -> String {
        emit_report(&self.reports)
    }

    /// Rebuilds the reports with different bootstrap settings.
    pub fn recompute(&mut self, replicates: usize, alpha: f64, seed: u64) -> Result<(), EvalError> {
        self.reports = all_reports(&self.conditions, replicates, alpha, seed)?;
        self.replicates = replicates;
        self.alpha = alpha;
        self.seed = seed;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub run: RunConfig,
    pub replicates: usize,
    pub alpha: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            run: RunConfig::default(),
            replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Runs `conditions` and scores them.
pub async fn evaluate(
    dataset: &Dataset,
    gateway: &Gateway,
    store: Option<&VectorStore>,
    answers: &dyn AnswerSource,
    conditions: &[AblationCondition],
    settings: &EvalSettings,
) -> Result<EvalRun, EvalError> {
    if settings.replicates == 0 {
        return Err(EvalError::Invalid("bootstrap replicates must be at least 1".into()));
    }
    let mut evaluator = Evaluator::new(dataset, gateway, answers, settings.run.clone());
    if let Some(s) = store {
        evaluator = evaluator.with_store(s);
    }
    let evaluated = evaluator.selected().len();
    let runs = evaluator.run(conditions).await?;
    let reports = all_reports(&runs, settings.replicates, settings.alpha, settings.run.seed)?;
    Ok(EvalRun {
        seed: settings.run.seed,
        replicates: settings.replicates,
        alpha: settings.alpha,
        dataset_size: dataset.len(),
        evaluated,
        conditions: runs,
        reports,
    })
}
