//! Wall time and backend calls with and without packaging.
//!
//! Each mode gets its own empty in-memory cache so that every request
//! reaches the backend and the two modes are measured on equal terms.

use std::sync::Arc;
use std::time::Instant;

use hera_core::backend::ResponseCache;
use hera_core::{DocumentRecord, PipelineConfig, RunMode};
use serde::{Deserialize, Serialize};

use super::pipeline_with;
use crate::error::CliError;
use crate::table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: RunMode,
    pub documents: usize,
    pub failures: usize,
    pub wall_ms: f64,
    pub backend_calls: usize,
    /// Backend calls per document, in input order.
    pub calls_per_document: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub baseline: BenchRow,
    pub hera: BenchRow,
    /// `hera.wall_ms / baseline.wall_ms`; absent when the baseline took no
    /// measurable time.
    pub time_ratio: Option<f64>,
    pub call_ratio: Option<f64>,
}

impl BenchTable {
    pub fn render(&self) -> String {
        let row = |r: &BenchRow| {
            vec![
                mode_label(r.mode).to_string(),
                r.documents.to_string(),
                r.failures.to_string(),
                format!("{:.1}", r.wall_ms),
                r.backend_calls.to_string(),
            ]
        };
        let ratio = |v: Option<f64>| v.map_or_else(|| "-".into(), |r| format!("{r:.2}x"));
        let mut out = table::render(
            &["mode", "docs", "failed", "wall ms", "calls"],
            &[row(&self.baseline), row(&self.hera)],
        );
        out.push_str(&format!(
            "time ratio {}  call ratio {}\n",
            ratio(self.time_ratio),
            ratio(self.call_ratio)
        ));
        out
    }
}

fn mode_label(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Baseline => "baseline",
        RunMode::Packaging => "packaging",
        RunMode::PackagingReordering => "packaging+reordering",
    }
}

fn measure(config: &PipelineConfig, documents: &[DocumentRecord]) -> Result<BenchRow, CliError> {
    let backend = config.build_backend()?;
    let pipeline = pipeline_with(config, backend, Arc::new(ResponseCache::in_memory()))?;
    let started = Instant::now();
    let items = pipeline.run_batch(documents)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1000.0;
    let calls_per_document = items
        .iter()
        .map(|item| match &item.result {
            Ok(out) => out.trace.backend_calls,
            Err(failure) => failure.trace.backend_calls,
        })
        .collect();
    Ok(BenchRow {
        mode: pipeline.mode(),
        documents: documents.len(),
        failures: items.iter().filter(|i| i.result.is_err()).count(),
        wall_ms,
        backend_calls: pipeline.gateway().backend_calls(),
        calls_per_document,
    })
}

pub fn cmd_bench(documents: &[DocumentRecord], config: &PipelineConfig) -> Result<BenchTable, CliError> {
    let mut baseline_config = config.clone();
    baseline_config.packaging.enabled = false;
    let mut hera_config = config.clone();
    hera_config.packaging.enabled = true;

    let baseline = measure(&baseline_config, documents)?;
    let hera = measure(&hera_config, documents)?;
    let ratio = |a: f64, b: f64| (b > 0.0).then(|| a / b);
    Ok(BenchTable {
        time_ratio: ratio(hera.wall_ms, baseline.wall_ms),
        call_ratio: ratio(hera.backend_calls as f64, baseline.backend_calls as f64),
        baseline,
        hera,
    })
}
