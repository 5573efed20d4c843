//! The `nutrilog` command: the REST service, the evaluation harness and the
//! offline analytics tools.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nutrilog_eval::EXIT_VALIDATION;
use nutrilog_server::commands::analytics::AnalyticsCommand;
use nutrilog_server::commands::eval::EvalCommand;
use nutrilog_server::ApiConfig;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "nutrilog", version, about = "Food logging with context-aware nutrition estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the REST service. Settings come from NUTRILOG_* variables; the
    /// flags below override them.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        media_dir: Option<PathBuf>,
    },
    /// Offline evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Engagement analytics over a service store.
    #[command(subcommand)]
    Analytics(AnalyticsCommand),
}

fn init_tracing() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("NUTRILOG_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

#[tokio::main]
async fn main() -> ExitCode {
    init_tracing();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { bind, db, media_dir } => {
            let mut config = match ApiConfig::from_env() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit(EXIT_VALIDATION);
                }
            };
            if let Some(b) = bind {
                config.bind = b;
            }
            if db.is_some() {
                config.db_path = db;
            }
            if media_dir.is_some() {
                config.media_dir = media_dir;
            }
            match nutrilog_server::serve(&config).await {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Eval(cmd) => match nutrilog_server::commands::eval::dispatch(&cmd).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                exit(e.exit_code())
            }
        },
        Command::Analytics(cmd) => match nutrilog_server::commands::analytics::dispatch(&cmd).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                exit(EXIT_VALIDATION)
            }
        },
    }
}
