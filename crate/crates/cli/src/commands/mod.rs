pub mod bench;
pub mod cache;
pub mod evaluate;
pub mod summarize;
pub mod sweep;

use std::path::Path;
use std::sync::Arc;

use hera_core::backend::{Backend, ResponseCache};
use hera_core::corpus::DatasetStream;
use hera_core::{DocumentRecord, Pipeline, PipelineConfig};

use crate::error::CliError;

/// Loads the documents to process.
///
/// A `.jsonl`/`.json` path is read as a dataset; any other file is a single
/// plain-text article whose id is the file stem. Skipped dataset records are
/// an error unless `allow_skipped` is set.
pub fn load_documents(path: &Path, limit: Option<usize>, allow_skipped: bool) -> Result<Vec<DocumentRecord>, CliError> {
    let is_dataset = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "json")
    );
    if !is_dataset {
        let article = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "document".into());
        return Ok(vec![DocumentRecord::new(id, article)]);
    }
    let mut stream = DatasetStream::open(path, limit).map_err(|e| CliError::Input(e.to_string()))?;
    let records: Vec<DocumentRecord> = stream.by_ref().collect();
    let skipped = stream.skipped();
    if skipped > 0 && !allow_skipped {
        return Err(CliError::Input(format!(
            "{}: {skipped} invalid record(s); pass --skip-invalid to ignore them",
            path.display()
        )));
    }
    if records.is_empty() {
        return Err(CliError::Input(format!("{}: dataset has no usable records", path.display())));
    }
    Ok(records)
}

/// A pipeline over an explicit backend and cache.
pub(crate) fn pipeline_with(
    config: &PipelineConfig,
    backend: Arc<dyn Backend>,
    cache: Arc<ResponseCache>,
) -> Result<Pipeline, CliError> {
    let gateway = config.gateway_for(backend, cache)?;
    Ok(Pipeline::new(config.clone(), Arc::new(gateway))?)
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
