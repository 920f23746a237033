use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hera_core::reordering::ReorderStrategy;
use hera_core::PipelineConfig;
use toml::Value;

use crate::error::CliError;
use crate::settings;

/// Long-document summarization with segment bags.
///
/// Any config key can also be given as `--section.key=value`, for example
/// `--packaging.chunk_size=10` or `--run.concurrency 8`.
#[derive(Debug, Parser)]
#[command(name = "hera", version)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summarize a dataset or a single text file.
    Summarize(SummarizeArgs),
    /// Score a summaries file against dataset references.
    Evaluate(EvaluateArgs),
    /// Run the pipeline for several bag sizes over a shared cache.
    Sweep(SweepArgs),
    /// Compare wall time and backend calls with and without packaging.
    Bench(BenchArgs),
    /// Inspect or clear a response cache directory.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bag size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of events to extract.
    #[arg(long)]
    pub n_events: Option<usize>,
    /// Reorder strategy: document_order, chain_order, llm_order or none.
    #[arg(long)]
    pub reorder: Option<String>,
    /// Baseline mode: one summarization request per document.
    #[arg(long)]
    pub no_packaging: bool,
    /// Backend kind: scripted or http.
    #[arg(long)]
    pub backend: Option<String>,
    /// Persistent response cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Dotted config override, repeatable: --set packaging.k=3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    /// Named flags first, then `--set` overrides in command-line order.
    pub fn overrides(&self) -> Result<Vec<(String, Value)>, CliError> {
        let mut out: Vec<(String, Value)> = Vec::new();
        if let Some(k) = self.k {
            out.push(("packaging.k".into(), Value::Integer(k as i64)));
        }
        if let Some(n) = self.n_events {
            out.push(("packaging.n_events".into(), Value::Integer(n as i64)));
        }
        if let Some(reorder) = &self.reorder {
            if reorder == "none" {
                out.push(("reorder.enabled".into(), Value::Boolean(false)));
            } else {
                let strategy: ReorderStrategy = reorder.parse().map_err(CliError::Config)?;
                out.push(("reorder.enabled".into(), Value::Boolean(true)));
                out.push(("reorder.strategy".into(), Value::String(strategy.as_str().into())));
            }
        }
        if self.no_packaging {
            out.push(("packaging.enabled".into(), Value::Boolean(false)));
        }
        if let Some(backend) = &self.backend {
            out.push(("backend.kind".into(), Value::String(backend.clone())));
        }
        if let Some(dir) = &self.cache_dir {
            out.push(("cache.dir".into(), Value::String(dir.display().to_string())));
        }
        for raw in &self.set {
            let (key, value) = settings::split_override(raw)?;
            out.push((key.to_string(), settings::parse_value(value)));
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        settings::resolve(self.config.as_deref(), &self.overrides()?)
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// JSON-lines dataset, or a plain text file holding one article.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Process at most this many documents.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Skip invalid dataset records instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output JSON-lines file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Summaries file written by `summarize`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Dataset holding the reference summaries.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Per-document scores computed elsewhere, merged by id.
    #[arg(long)]
    pub external_scores: Option<PathBuf>,
    /// Stem tokens before matching.
    #[arg(long)]
    pub stem: bool,
    /// Report file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Bag sizes to run.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7,8")]
    pub k_values: Vec<usize>,
    /// Sweep table file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Timing table file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// Entry count, size and corrupt entries.
    Stats {
        #[arg(long)]
        cache_dir: PathBuf,
    },
    /// Like stats, but exits nonzero when corrupt entries exist.
    Verify {
        #[arg(long)]
        cache_dir: PathBuf,
    },
    /// Remove every entry.
    Clear {
        #[arg(long)]
        cache_dir: PathBuf,
    },
}
