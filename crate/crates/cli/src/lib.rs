//! Command-line front end: summarize, evaluate, sweep, bench and cache
//! maintenance on top of `hera-core`.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod settings;
pub mod table;

use std::io::Write;

use args::{CacheAction, Cli, Command};
use commands::bench::cmd_bench;
use commands::evaluate::{cmd_evaluate, read_external_scores, read_predictions};
use commands::summarize::cmd_summarize;
use commands::sweep::cmd_sweep;
use commands::{cache, load_documents};
use error::{CliError, DocumentFailure};
use hera_core::metrics::TokenizerOptions;

pub use commands::bench::{BenchRow, BenchTable};
pub use commands::evaluate::{Report, ReportRow};
pub use commands::summarize::{OutputRecord, TraceSummary};
pub use commands::sweep::{SweepRow, SweepTable};

/// How a command finished when it did not hit a hard error.
#[derive(Debug)]
pub enum Completion {
    Ok,
    /// Some documents failed; the rest were written.
    DocumentsFailed(Vec<DocumentFailure>),
    /// Cache verification found corrupt entries.
    CorruptCache(usize),
}

fn print(text: &str) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::Output(e.to_string()))
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Output(e.to_string()))
}

pub fn run(cli: Cli) -> Result<Completion, CliError> {
    match cli.command {
        Command::Summarize(args) => {
            let config = args.config.resolve()?;
            let docs = load_documents(&args.data.dataset, args.data.limit, args.data.skip_invalid)?;
            let outcome = cmd_summarize(&docs, &config)?;
            let bytes = output::to_jsonl(&outcome.records)?;
            match &args.out {
                Some(path) => output::write_atomic(path, &bytes)?,
                None => print(&String::from_utf8_lossy(&bytes))?,
            }
            if outcome.failures.is_empty() {
                Ok(Completion::Ok)
            } else {
                Ok(Completion::DocumentsFailed(outcome.failures))
            }
        }
        Command::Evaluate(args) => {
            let predictions = read_predictions(&args.predictions)?;
            let references = load_documents(&args.dataset, None, false)?;
            let external = args.external_scores.as_deref().map(read_external_scores).transpose()?;
            let report = cmd_evaluate(
                &predictions,
                &references,
                external.as_ref(),
                TokenizerOptions { stem: args.stem },
            )?;
            if let Some(path) = &args.out {
                output::write_json(path, &report)?;
            }
            print(&report.render())?;
            Ok(Completion::Ok)
        }
        Command::Sweep(args) => {
            let config = args.config.resolve()?;
            let docs = load_documents(&args.data.dataset, args.data.limit, args.data.skip_invalid)?;
            let table = cmd_sweep(&docs, &config, &args.k_values)?;
            if let Some(path) = &args.out {
                output::write_json(path, &table)?;
            }
            print(&table.render())?;
            Ok(Completion::Ok)
        }
        Command::Bench(args) => {
            let config = args.config.resolve()?;
            let docs = load_documents(&args.data.dataset, args.data.limit, args.data.skip_invalid)?;
            let table = cmd_bench(&docs, &config)?;
            if let Some(path) = &args.out {
                output::write_json(path, &table)?;
            }
            print(&table.render())?;
            Ok(Completion::Ok)
        }
        Command::Cache { action } => match action {
            CacheAction::Stats { cache_dir } => {
                print(&json_line(&cache::cache_stats(&cache_dir)?)?)?;
                Ok(Completion::Ok)
            }
            CacheAction::Verify { cache_dir } => {
                let report = cache::cache_stats(&cache_dir)?;
                print(&json_line(&report)?)?;
                Ok(match report.stats.corrupt {
                    0 => Completion::Ok,
                    n => Completion::CorruptCache(n),
                })
            }
            CacheAction::Clear { cache_dir } => {
                print(&json_line(&cache::cache_clear(&cache_dir)?)?)?;
                Ok(Completion::Ok)
            }
        },
    }
}
