use hera_core::pipeline::PipelineTrace;
use hera_core::{DocumentRecord, Pipeline, PipelineConfig, RunMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, DocumentFailure};

/// The trace fields written next to each summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub digest: String,
    pub mode: RunMode,
    pub paragraph_count: usize,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub parse_fallbacks: usize,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

impl From<&PipelineTrace> for TraceSummary {
    fn from(t: &PipelineTrace) -> Self {
        Self {
            digest: t.digest(),
            mode: t.mode,
            paragraph_count: t.paragraph_count,
            backend_calls: t.backend_calls,
            cache_hits: t.cache_hits,
            prompt_tokens: t.prompt_tokens,
            output_tokens: t.output_tokens,
            parse_fallbacks: t.parse_fallbacks,
            wall_ms: t.timings.total_ms,
            failed_stage: t.failed_stage.clone(),
        }
    }
}

/// One line of the summaries file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub event_order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trace: TraceSummary,
}

#[derive(Debug)]
pub struct SummarizeOutcome {
    pub records: Vec<OutputRecord>,
    pub failures: Vec<DocumentFailure>,
}

pub fn cmd_summarize(documents: &[DocumentRecord], config: &PipelineConfig) -> Result<SummarizeOutcome, CliError> {
    let pipeline = Pipeline::from_config(config.clone())?;
    summarize_with(&pipeline, documents)
}

pub(crate) fn summarize_with(pipeline: &Pipeline, documents: &[DocumentRecord]) -> Result<SummarizeOutcome, CliError> {
    let items = pipeline.run_batch(documents)?;
    let mut records = Vec::with_capacity(items.len());
    let mut failures = Vec::new();
    for item in items {
        match item.result {
            Ok(out) => records.push(OutputRecord {
                id: item.id,
                summary: Some(out.summary.text),
                event_order: out.summary.event_order,
                error: None,
                trace: TraceSummary::from(&out.trace),
            }),
            Err(failure) => {
                tracing::warn!(id = %item.id, error = %failure.error, "document failed");
                failures.push(DocumentFailure {
                    id: item.id.clone(),
                    stage: failure.trace.failed_stage.clone(),
                    message: failure.error.to_string(),
                });
                records.push(OutputRecord {
                    id: item.id,
                    summary: None,
                    event_order: Vec::new(),
                    error: Some(failure.error.to_string()),
                    trace: TraceSummary::from(&*failure.trace),
                });
            }
        }
    }
    Ok(SummarizeOutcome { records, failures })
}
