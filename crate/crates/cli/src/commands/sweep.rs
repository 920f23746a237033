//! Bag-size sweep: one batch run per k over a shared response cache.
//!
//! Local summaries, events and rankings do not depend on k, so after the
//! first row those requests are served from the cache and only bag and
//! aggregate requests reach the backend.

use std::time::Instant;

use hera_core::metrics::{score_all, TokenizerOptions};
use hera_core::prompting::TemplateId;
use hera_core::{DocumentRecord, PipelineConfig};
use serde::{Deserialize, Serialize};

use super::{mean, pipeline_with};
use crate::error::CliError;
use crate::table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub documents: usize,
    pub failures: usize,
    /// Documents with a reference, i.e. those the scores average over.
    pub scored: usize,
    pub rouge1: Option<f64>,
    pub rouge2: Option<f64>,
    pub rouge_l: Option<f64>,
    pub backend_calls: usize,
    pub local_summary_calls: usize,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(k: usize, documents: usize, error: String) -> Self {
        Self {
            k,
            documents,
            failures: documents,
            scored: 0,
            rouge1: None,
            rouge2: None,
            rouge_l: None,
            backend_calls: 0,
            local_summary_calls: 0,
            wall_ms: 0.0,
            error: Some(error),
        }
    }

    /// The row without its wall time, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub config: PipelineConfig,
}

impl SweepTable {
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".into(), table::score);
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    opt(r.rouge1),
                    opt(r.rouge2),
                    opt(r.rouge_l),
                    r.backend_calls.to_string(),
                    r.local_summary_calls.to_string(),
                    format!("{}/{}", r.documents - r.failures, r.documents),
                    format!("{:.1}", r.wall_ms),
                ]
            })
            .collect();
        table::render(
            &["k", "R-1", "R-2", "R-L", "calls", "local calls", "ok", "wall ms"],
            &rows,
        )
    }
}

pub fn cmd_sweep(
    documents: &[DocumentRecord],
    config: &PipelineConfig,
    k_values: &[usize],
) -> Result<SweepTable, CliError> {
    if k_values.is_empty() {
        return Err(CliError::Config("k values must not be empty".into()));
    }
    if let Some(k) = k_values.iter().find(|&&k| k == 0) {
        return Err(CliError::Config(format!("k values must be >= 1, got {k}")));
    }
    let backend = config.build_backend()?;
    let cache = config.build_cache()?;
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let mut run_config = config.clone();
        run_config.packaging.enabled = true;
        run_config.packaging.k = k;
        let pipeline = match pipeline_with(&run_config, backend.clone(), cache.clone()) {
            Ok(p) => p,
            Err(e) => {
                rows.push(SweepRow::failed(k, documents.len(), e.to_string()));
                continue;
            }
        };
        let started = Instant::now();
        let items = match pipeline.run_batch(documents) {
            Ok(items) => items,
            Err(e) => {
                rows.push(SweepRow::failed(k, documents.len(), e.to_string()));
                continue;
            }
        };
        let wall_ms = started.elapsed().as_secs_f64() * 1000.0;

        let mut failures = 0;
        let mut local_summary_calls = 0;
        let mut scores = Vec::new();
        for (doc, item) in documents.iter().zip(&items) {
            match &item.result {
                Ok(out) => {
                    local_summary_calls += out
                        .trace
                        .calls
                        .iter()
                        .filter(|c| c.template_id == TemplateId::LocalSummary && !c.from_cache)
                        .count();
                    if let Some(reference) = &doc.reference {
                        scores.push(score_all(&out.summary.text, reference, TokenizerOptions::default()));
                    }
                }
                Err(failure) => {
                    failures += 1;
                    local_summary_calls += failure
                        .trace
                        .calls
                        .iter()
                        .filter(|c| c.template_id == TemplateId::LocalSummary && !c.from_cache)
                        .count();
                }
            }
        }
        tracing::info!(k, failures, calls = pipeline.gateway().backend_calls(), "sweep row done");
        rows.push(SweepRow {
            k,
            documents: documents.len(),
            failures,
            scored: scores.len(),
            rouge1: mean(scores.iter().map(|s| s.rouge1.f1 * 100.0)),
            rouge2: mean(scores.iter().map(|s| s.rouge2.f1 * 100.0)),
            rouge_l: mean(scores.iter().map(|s| s.rouge_l.f1 * 100.0)),
            backend_calls: pipeline.gateway().backend_calls(),
            local_summary_calls,
            wall_ms,
            error: None,
        });
    }
    Ok(SweepTable {
        rows,
        config: config.clone(),
    })
}
