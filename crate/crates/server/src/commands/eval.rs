//! `nutrilog eval`: ablation runs, report regeneration, dataset ingestion.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use nutrilog_core::gateway::{Gateway, ProviderConfig, ProviderKind};
use nutrilog_core::vector_store::VectorStore;
use nutrilog_eval::dataset::{load_answers, write_jsonl};
use nutrilog_eval::nutrition5k::{convert, DEFAULT_IMAGE_TEMPLATE};
use nutrilog_eval::synthetic::{synthetic_answers, synthetic_dataset};
use nutrilog_eval::{
    build_store, emit_exclusions, evaluate, AblationCondition, AnswerSource, Dataset, EvalError, EvalRun,
    EvalSettings, FollowUpMode, NoAnswers, RunConfig, ScriptedAnswers, StdioAnswers, DEFAULT_ALPHA,
    DEFAULT_RAG_K, DEFAULT_REPLICATES,
};

use crate::config::DEFAULT_EMBEDDING_DIM;

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Evaluate a dataset under one or more ablation conditions.
    Run(RunArgs),
    /// Re-print or re-score a saved run.
    Report(ReportArgs),
    /// Convert Nutrition5k metadata into a dataset file.
    IngestDataset(IngestArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Model provider; defaults to `NUTRILOG_PROVIDER`, then mock.
    #[arg(long, value_parser = parse_kind)]
    pub provider: Option<ProviderKind>,
    #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
    pub embedding_dim: usize,
}

fn parse_kind(s: &str) -> Result<ProviderKind, String> {
    s.parse()
}

impl ProviderArgs {
    pub fn gateway(&self) -> Result<Gateway, EvalError> {
        let mut cfg = ProviderConfig::from_env().map_err(EvalError::Invalid)?;
        if let Some(kind) = self.provider {
            cfg.provider_kind = kind;
        }
        let provider = cfg
            .build(self.embedding_dim)
            .map_err(|e| EvalError::Invalid(format!("cannot build provider: {e}")))?;
        Ok(Gateway::new(provider))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Dataset JSONL file.
    #[arg(long, required_unless_present = "synthetic")]
    pub dataset: Option<PathBuf>,
    /// Generate a seeded synthetic dataset of this many dishes instead.
    #[arg(long, conflicts_with = "dataset")]
    pub synthetic: Option<usize>,
    /// Saved embedding index; built from the dataset when omitted.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Comma-separated conditions such as `vanilla,rag+receipt`, or `all`.
    #[arg(long, default_value = "all")]
    pub conditions: String,
    #[arg(long, default_value_t = DEFAULT_RAG_K)]
    pub rag_k: usize,
    #[arg(long = "bootstrap-B", default_value_t = DEFAULT_REPLICATES)]
    pub bootstrap_b: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSONL of scripted follow-up answers.
    #[arg(long, conflicts_with = "interactive")]
    pub answers_file: Option<PathBuf>,
    /// Ask follow-up questions on the terminal.
    #[arg(long)]
    pub interactive: bool,
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub workers: usize,
    /// Directory for `run.json` and `report.md`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep each rendered generation prompt in `run.json`.
    #[arg(long)]
    pub keep_prompts: bool,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// A `run.json` written by `eval run`.
    #[arg(long)]
    pub input: PathBuf,
    /// Re-run the bootstrap with these settings.
    #[arg(long = "bootstrap-B")]
    pub bootstrap_b: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Dish metadata CSV files.
    #[arg(long = "nutrition5k", required = true, num_args = 1..)]
    pub metadata: Vec<PathBuf>,
    /// Dataset root; dishes without an image under it are skipped.
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_IMAGE_TEMPLATE)]
    pub image_template: String,
    /// Output dataset JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Also embed every dish and save the index here.
    #[arg(long)]
    pub build_store: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

fn io_err(path: &Path, e: std::io::Error) -> EvalError {
    EvalError::Invalid(format!("{}: {e}", path.display()))
}

enum Answers {
    None(NoAnswers),
    Scripted(ScriptedAnswers),
    Terminal(StdioAnswers),
}

impl Answers {
    fn source(&self) -> &dyn AnswerSource {
        match self {
            Answers::None(a) => a,
            Answers::Scripted(a) => a,
            Answers::Terminal(a) => a,
        }
    }
}

/// Executes `eval run`; returns the run after printing the table.
pub async fn run(args: &RunArgs) -> Result<EvalRun, EvalError> {
    let gateway = args.provider.gateway()?;
    let dataset = match (&args.dataset, args.synthetic) {
        (Some(path), _) => Dataset::load(path)?,
        (None, Some(n)) => synthetic_dataset(n, args.seed),
        (None, None) => return Err(EvalError::Invalid("either --dataset or --synthetic is required".into())),
    };
    let answers = if args.interactive {
        Answers::Terminal(StdioAnswers::stdio())
    } else if let Some(path) = &args.answers_file {
        Answers::Scripted(ScriptedAnswers::new(load_answers(path)?))
    } else if args.synthetic.is_some() {
        Answers::Scripted(ScriptedAnswers::from_records(synthetic_answers(&dataset)))
    } else {
        Answers::None(NoAnswers)
    };
    let mode = answers.source().mode();
    let conditions: Vec<AblationCondition> = AblationCondition::parse_list(&args.conditions)
        .map_err(EvalError::Invalid)?
        .into_iter()
        .map(|c| {
            let c = c.with_rag_k(args.rag_k);
            if c.follow_up {
                c.with_follow_up_mode(mode)
            } else {
                c
            }
        })
        .collect();
    if mode == FollowUpMode::Off && conditions.iter().any(|c| c.follow_up) {
        return Err(EvalError::Invalid(
            "follow-up conditions need --answers-file or --interactive".into(),
        ));
    }
    let store = match &args.store {
        Some(dir) => Some(VectorStore::load(dir).map_err(|e| EvalError::Invalid(format!("{}: {e}", dir.display())))?),
        None if conditions.iter().any(|c| c.rag) => {
            Some(build_store(&dataset, &gateway, args.provider.embedding_dim).await?)
        }
        None => None,
    };
    let settings = EvalSettings {
        run: RunConfig {
            seed: args.seed,
            workers: args.workers.max(1),
            sample: args.sample,
            keep_prompts: args.keep_prompts,
        },
        replicates: args.bootstrap_b,
        alpha: args.alpha,
    };
    let result = evaluate(&dataset, &gateway, store.as_ref(), answers.source(), &conditions, &settings).await?;
    let table = result.table();
    let exclusions = emit_exclusions(&result.conditions);
    println!("{table}");
    if !exclusions.is_empty() {
        eprintln!("{exclusions}");
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let run_path = dir.join("run.json");
        fs::write(&run_path, result.to_json()?).map_err(|e| io_err(&run_path, e))?;
        let md_path = dir.join("report.md");
        let mut md = table;
        if !exclusions.is_empty() {
            md.push('\n');
            md.push_str(&exclusions);
        }
        fs::write(&md_path, md).map_err(|e| io_err(&md_path, e))?;
    }
    Ok(result)
}

/// Executes `eval report`.
pub fn report(args: &ReportArgs) -> Result<String, EvalError> {
    let text = fs::read_to_string(&args.input).map_err(|e| io_err(&args.input, e))?;
    let mut run = EvalRun::from_json(&text)?;
    if args.bootstrap_b.is_some() || args.alpha.is_some() || args.seed.is_some() {
        let b = args.bootstrap_b.unwrap_or(run.replicates);
        let alpha = args.alpha.unwrap_or(run.alpha);
        let seed = args.seed.unwrap_or(run.seed);
        run.recompute(b, alpha, seed)?;
    }
    let table = run.table();
    match &args.out {
        Some(path) => fs::write(path, &table).map_err(|e| io_err(path, e))?,
        None => println!("{table}"),
    }
    Ok(table)
}

/// Executes `eval ingest-dataset`; returns the number of records written.
pub async fn ingest(args: &IngestArgs) -> Result<usize, EvalError> {
    let mut records = Vec::new();
    for path in &args.metadata {
        let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
        let conv = convert(file, &args.image_template, args.image_root.as_deref())?;
        for (dish, reason) in &conv.skipped {
            tracing::warn!(dish = %dish, reason = %reason, "skipped");
        }
        eprintln!(
            "{}: {} dishes, {} skipped",
            path.display(),
            conv.records.len(),
            conv.skipped.len()
        );
        records.extend(conv.records);
    }
    if let Some(root) = &args.image_root {
        for r in &mut records {
            if let Some(m) = &r.media_ref {
                r.media_ref = Some(root.join(m).to_string_lossy().into_owned());
            }
        }
    }
    let base = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let dataset = Dataset::new(records, base)?;
    let file = fs::File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    write_jsonl(std::io::BufWriter::new(file), &dataset.records).map_err(|e| io_err(&args.out, e))?;
    if let Some(dir) = &args.build_store {
        let gateway = args.provider.gateway()?;
        let store = build_store(&dataset, &gateway, args.provider.embedding_dim).await?;
        store
            .save(dir)
            .map_err(|e| EvalError::Invalid(format!("{}: {e}", dir.display())))?;
    }
    Ok(dataset.len())
}

pub async fn dispatch(cmd: &EvalCommand) -> Result<(), EvalError> {
    match cmd {
        EvalCommand::Run(a) => run(a).await.map(|_| ()),
        EvalCommand::Report(a) => report(a).map(|_| ()),
        EvalCommand::IngestDataset(a) => ingest(a).await.map(|n| eprintln!("wrote {n} records")),
    }
}
