//! Command-line subcommands other than `serve`.

pub mod analytics;
pub mod eval;
